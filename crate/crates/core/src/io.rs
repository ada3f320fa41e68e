//! Structured text (JSON) serialization helpers.
//!
//! Matrices are written with explicit shape fields and row-nested data so the
//! files are readable and self-describing:
//!
//! ```json
//! {"rows": 2, "cols": 3, "data": [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]}
//! ```
//!
//! Round-trips are bit-faithful for finite doubles (serde_json uses
//! shortest-roundtrip float formatting).

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
#[cfg(test)]
use serde::Deserialize;

use crate::error::Result;

/// Serde adapter for `Array2<f64>` fields.
pub mod a2 {
    use ndarray::Array2;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    }

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let repr = Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        repr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let repr = Repr::deserialize(d)?;
        if repr.data.len() != repr.rows || repr.data.iter().any(|r| r.len() != repr.cols) {
            return Err(D::Error::custom("matrix data does not match declared shape"));
        }
        let flat: Vec<f64> = repr.data.into_iter().flatten().collect();
        Array2::from_shape_vec((repr.rows, repr.cols), flat)
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Serde adapter for `Array1<f64>` fields.
pub mod a1 {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        len: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            len: v.len(),
            data: v.to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        let repr = Repr::deserialize(d)?;
        if repr.data.len() != repr.len {
            return Err(serde::de::Error::custom("vector data length mismatch"));
        }
        Ok(Array1::from_vec(repr.data))
    }
}

/// Serde adapter for `Vec<Array2<f64>>` fields (generator lists).
pub mod a2vec {
    use ndarray::Array2;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Array2<f64>], s: S) -> Result<S::Ok, S::Error> {
        #[derive(serde::Serialize)]
        struct Wrap<'a>(#[serde(with = "super::a2")] &'a Array2<f64>);
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for m in v {
            seq.serialize_element(&Wrap(m))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Array2<f64>>, D::Error> {
        #[derive(serde::Deserialize)]
        struct Wrap(#[serde(with = "super::a2")] Array2<f64>);
        let wraps: Vec<Wrap> = Vec::deserialize(d)?;
        Ok(wraps.into_iter().map(|w| w.0).collect())
    }
}

/// Write any serializable value as pretty JSON.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text)?;
    Ok(())
}

/// Read a JSON document back.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// FNV-1a hash of a byte string, hex-encoded. Used to fingerprint configs in
/// run metadata.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    #[serde(with = "a2")]
    m: ndarray::Array2<f64>,
}
