//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "MASRCKPT"
//! u32       format version (currently 1)
//! u32 + n   config hash (ascii, length-prefixed)
//! u64       quantizer seed
//! u32 + n*8 character-table seeds, one per text stream
//! u64       training step counter
//! u64       optimizer updates applied
//! 3 groups  parameter tensors, first moments, second moments
//! ```
//!
//! Each group is a u32 tensor count followed by, per tensor, a
//! length-prefixed name, a u64 element count, and the raw f64 values.
//! Values are written without any rounding, so save/load roundtrips are
//! bit-exact and resumed runs continue from identical state.
//!
//! The stored config hash pins the checkpoint to the run configuration
//! that produced it; loading under a different configuration fails
//! rather than silently reshaping tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use masr_core::model::{ModelState, Params};
use masr_core::ssl::Quantizer;

use crate::config::RunConfig;
use crate::error::{io_err, MasrError, Result};

pub const CKPT_MAGIC: &[u8; 8] = b"MASRCKPT";
pub const CKPT_VERSION: u32 = 1;

/// Everything needed to resume training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_hash: String,
    /// Seeds of the fixed per-text-stream character tables, in stream order.
    pub char_table_seeds: Vec<u64>,
    /// Completed training steps.
    pub step: u64,
    pub model: ModelState,
    pub adam_m: Params,
    pub adam_v: Params,
    pub adam_t: u64,
}

fn format_err(path: &Path, message: impl Into<String>) -> MasrError {
    MasrError::Format { path: path.into(), message: message.into() }
}

fn write_tensors(out: &mut impl Write, params: &Params) -> std::io::Result<()> {
    let tensors = params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, values) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let inner = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        out.write_all(CKPT_MAGIC)?;
        out.write_all(&CKPT_VERSION.to_le_bytes())?;
        out.write_all(&(ckpt.config_hash.len() as u32).to_le_bytes())?;
        out.write_all(ckpt.config_hash.as_bytes())?;
        out.write_all(&ckpt.model.quantizer.seed().to_le_bytes())?;
        out.write_all(&(ckpt.char_table_seeds.len() as u32).to_le_bytes())?;
        for seed in &ckpt.char_table_seeds {
            out.write_all(&seed.to_le_bytes())?;
        }
        out.write_all(&ckpt.step.to_le_bytes())?;
        out.write_all(&ckpt.adam_t.to_le_bytes())?;
        write_tensors(out, &ckpt.model.params)?;
        write_tensors(out, &ckpt.adam_m)?;
        write_tensors(out, &ckpt.adam_v)?;
        out.flush()
    };
    inner(&mut out).map_err(io_err(path))
}

struct Reader<'a> {
    path: &'a Path,
    inner: BufReader<File>,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| format_err(self.path, format!("truncated reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    /// Read one tensor group into `template`, insisting that names and
    /// sizes match the model structure the config describes.
    fn tensors_into(&mut self, template: &mut Params, group: &str) -> Result<()> {
        let mut slots = template.tensors_mut();
        let count = self.u32(group)? as usize;
        if count != slots.len() {
            return Err(format_err(
                self.path,
                format!("{group}: {count} tensors, model has {}", slots.len()),
            ));
        }
        for (name, slot) in slots.iter_mut() {
            let name_len = self.u32(group)? as usize;
            let got = String::from_utf8(self.bytes(name_len, group)?)
                .map_err(|_| format_err(self.path, format!("{group}: non-utf8 tensor name")))?;
            if got != *name {
                return Err(format_err(
                    self.path,
                    format!("{group}: tensor {got:?} where {name:?} expected"),
                ));
            }
            let len = self.u64(group)? as usize;
            if len != slot.len() {
                return Err(format_err(
                    self.path,
                    format!("{group}.{name}: {len} values, model needs {}", slot.len()),
                ));
            }
            for v in slot.iter_mut() {
                *v = f64::from_le_bytes(self.bytes(8, group)?.try_into().unwrap());
            }
        }
        Ok(())
    }
}

/// Load a checkpoint written for `config`. The quantizer regenerates
/// from its stored seed; all trainable tensors come from the file.
pub fn load_checkpoint(path: &Path, config: &RunConfig) -> Result<Checkpoint> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = Reader { path, inner: BufReader::new(file) };

    if r.bytes(8, "magic")? != CKPT_MAGIC {
        return Err(format_err(path, "bad magic, not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != CKPT_VERSION {
        return Err(format_err(
            path,
            format!("unsupported checkpoint version {version} (expected {CKPT_VERSION})"),
        ));
    }
    let hash_len = r.u32("config hash")? as usize;
    let stored_hash = String::from_utf8(r.bytes(hash_len, "config hash")?)
        .map_err(|_| format_err(path, "non-utf8 config hash"))?;
    let expected = config.hash();
    if stored_hash != expected {
        return Err(MasrError::ConfigHashMismatch { expected, got: stored_hash });
    }

    let quantizer_seed = r.u64("quantizer seed")?;
    let n_tables = r.u32("char table seeds")? as usize;
    let mut char_table_seeds = Vec::with_capacity(n_tables);
    for _ in 0..n_tables {
        char_table_seeds.push(r.u64("char table seeds")?);
    }
    let step = r.u64("step counter")?;
    let adam_t = r.u64("optimizer counter")?;

    let cfg = config.backbone_config();
    let proj_dims: Vec<usize> = config.streams.iter().map(|s| s.d_q).collect();
    let template = ModelState::init(cfg.clone(), &proj_dims, config.training.seed);
    let mut params = template.params.zeros_like();
    let mut adam_m = params.zeros_like();
    let mut adam_v = params.zeros_like();
    r.tensors_into(&mut params, "params")?;
    r.tensors_into(&mut adam_m, "adam_m")?;
    r.tensors_into(&mut adam_v, "adam_v")?;

    let quantizer = Quantizer::generate(
        quantizer_seed,
        cfg.step_dim(),
        cfg.d_c,
        cfg.codebook_size,
        cfg.stack,
    );
    Ok(Checkpoint {
        config_hash: stored_hash,
        char_table_seeds,
        step,
        model: ModelState { cfg, params, quantizer },
        adam_m,
        adam_v,
        adam_t,
    })
}
