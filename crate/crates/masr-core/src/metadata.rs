//! Fixed (non-trained) metadata encoders: language embedding tables,
//! geocoordinates on the unit sphere, and byte-level transcript vectors.
//!
//! Every encoder yields a unit-norm vector or a miss; misses drop the item
//! from that stream rather than erroring, since coverage is never total.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::{l2_normalize, Mat};
use crate::rng::SeedRng;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Which typological feature family a language table encodes. Purely
/// descriptive — the numbers come from the table file either way — but
/// recorded so reports can say what a "language" stream actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LangVecCategory {
    Syntactic,
    GeographicFeat,
    Phonetic,
    Featural,
    Genetic,
    Inventory,
}

impl LangVecCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            LangVecCategory::Syntactic => "syntactic",
            LangVecCategory::GeographicFeat => "geographic_feat",
            LangVecCategory::Phonetic => "phonetic",
            LangVecCategory::Featural => "featural",
            LangVecCategory::Genetic => "genetic",
            LangVecCategory::Inventory => "inventory",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "syntactic" => LangVecCategory::Syntactic,
            "geographic_feat" => LangVecCategory::GeographicFeat,
            "phonetic" => LangVecCategory::Phonetic,
            "featural" => LangVecCategory::Featural,
            "genetic" => LangVecCategory::Genetic,
            "inventory" => LangVecCategory::Inventory,
            _ => return None,
        })
    }
}

/// Language -> typological feature vector, loaded from a tab-separated
/// table with a `lang\tf0\tf1...` header. Rows are l2-normalized at load
/// time.
#[derive(Debug, Clone)]
pub struct LangVecTable {
    category: LangVecCategory,
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl LangVecTable {
    /// Parse the TSV text. The first non-empty line must be the header;
    /// its feature-column count fixes the dimension. Empty lines are
    /// skipped; ragged rows, zero vectors, unparsable numbers, and
    /// duplicate languages are rejected with the 1-based line number.
    pub fn parse(text: &str, category: LangVecCategory) -> Result<Self> {
        let mut dim = 0usize;
        let mut saw_header = false;
        let mut rows = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let first = fields.next().unwrap_or("").trim();
            if !saw_header {
                if first != "lang" {
                    return Err(CoreError::Parse {
                        line: lineno,
                        message: format!(
                            "expected header starting with 'lang', found {first:?}"
                        ),
                    });
                }
                dim = fields.count();
                if dim == 0 {
                    return Err(CoreError::Parse {
                        line: lineno,
                        message: "header declares no feature columns".to_string(),
                    });
                }
                saw_header = true;
                continue;
            }
            if first.is_empty() {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: "missing language name".to_string(),
                });
            }
            let mut vec = Vec::with_capacity(dim);
            for field in fields {
                let v: f64 = field.trim().parse().map_err(|_| CoreError::Parse {
                    line: lineno,
                    message: format!("bad number {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(CoreError::Parse {
                        line: lineno,
                        message: format!("non-finite value {field:?}"),
                    });
                }
                vec.push(v);
            }
            if vec.len() != dim {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: format!("expected {dim} features, found {}", vec.len()),
                });
            }
            l2_normalize(&mut vec, "language vector").map_err(|_| CoreError::Parse {
                line: lineno,
                message: format!("zero vector for language {first:?}"),
            })?;
            if rows.insert(first.to_string(), vec).is_some() {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: format!("duplicate language {first:?}"),
                });
            }
        }
        if !saw_header {
            return Err(CoreError::Parse {
                line: 1,
                message: "empty table (no header)".to_string(),
            });
        }
        Ok(LangVecTable { category, dim, rows })
    }

    pub fn category(&self) -> LangVecCategory {
        self.category
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// A miss (unknown language) is not an error: the item simply does not
    /// participate in the stream.
    pub fn encode(&self, language: &str) -> Option<Vec<f64>> {
        self.rows.get(language).cloned()
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(|s| s.as_str())
    }
}

/// Map latitude/longitude (degrees, lon in (-180, 180]) onto the unit
/// sphere: (cos phi cos lambda, cos phi sin lambda, sin phi). Cosine
/// distance between two such points is monotone in their great-circle
/// distance, so neighbour ordering under the mining machinery matches
/// geographic ordering.
pub fn encode_geo(lat_deg: f64, lon_deg: f64) -> Result<[f64; 3]> {
    if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
        return Err(CoreError::OutOfRange { what: "latitude", value: lat_deg });
    }
    if !lon_deg.is_finite() || lon_deg <= -180.0 || lon_deg > 180.0 {
        return Err(CoreError::OutOfRange { what: "longitude", value: lon_deg });
    }
    let phi = lat_deg.to_radians();
    let lam = lon_deg.to_radians();
    let (sp, cp) = (libm::sin(phi), libm::cos(phi));
    let (sl, cl) = (libm::sin(lam), libm::cos(lam));
    Ok([cp * cl, cp * sl, sp])
}

/// Great-circle distance in kilometres on a sphere of radius
/// [`EARTH_RADIUS_KM`].
pub fn haversine_km(a_lat: f64, a_lon: f64, b_lat: f64, b_lon: f64) -> f64 {
    let p1 = a_lat.to_radians();
    let p2 = b_lat.to_radians();
    let dp = (b_lat - a_lat).to_radians();
    let dl = (b_lon - a_lon).to_radians();
    let h = libm::sin(dp / 2.0) * libm::sin(dp / 2.0)
        + libm::cos(p1) * libm::cos(p2) * libm::sin(dl / 2.0) * libm::sin(dl / 2.0);
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(h.min(1.0)))
}

/// Canonical hashable key for a coordinate pair; two items share a geo
/// label only when both coordinates are bit-identical.
pub fn geo_key(lat_deg: f64, lon_deg: f64) -> (u64, u64) {
    (lat_deg.to_bits(), lon_deg.to_bits())
}

/// Fixed random byte-embedding table for transcripts. The encoding of a
/// string is the mean of its bytes' rows, l2-normalized.
#[derive(Debug, Clone)]
pub struct CharTable {
    table: Mat,
    seed: u64,
}

impl CharTable {
    pub fn generate(seed: u64, d_e: usize) -> Self {
        let mut rng = SeedRng::from_seed(seed);
        CharTable { table: Mat::gaussian(256, d_e, 1.0, &mut rng), seed }
    }

    /// Explicit rows for tests; must have one row per byte value.
    pub fn from_rows(table: Mat) -> Result<Self> {
        if table.rows() != 256 {
            return Err(CoreError::ShapeMismatch {
                context: "character table rows",
                expected: 256,
                got: table.rows(),
            });
        }
        Ok(CharTable { table, seed: 0 })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Empty transcripts are misses. A zero-norm mean (probability zero
    /// with a Gaussian table) is also treated as a miss to keep the
    /// encoder total.
    pub fn encode(&self, text: &str) -> Option<Vec<f64>> {
        let bytes = text.as_bytes();
        if bytes.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.dim()];
        for &b in bytes {
            for (m, &v) in mean.iter_mut().zip(self.table.row(b as usize)) {
                *m += v;
            }
        }
        let inv = 1.0 / bytes.len() as f64;
        for m in &mut mean {
            *m *= inv;
        }
        match l2_normalize(&mut mean, "transcript encoding") {
            Ok(()) => Some(mean),
            Err(_) => None,
        }
    }
}
