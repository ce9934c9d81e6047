//! Matrix containers.
//!
//! JSON: `{"dim": n, "re": [[..]], "im": [[..]]}`, row-major nested arrays.
//!
//! Binary: an 8-byte little-endian `u64` dimension header followed by the
//! entries in column-major order, each stored as little-endian `f64` real part
//! then imaginary part.

use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{c64, validate, Mat};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl From<&Mat> for MatJson {
    fn from(m: &Mat) -> Self {
        let n = m.nrows();
        let rows = |f: fn(&super::C64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        MatJson {
            dim: n,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

impl TryFrom<MatJson> for Mat {
    type Error = Error;

    fn try_from(j: MatJson) -> Result<Mat> {
        let n = j.dim;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !shape_ok(&j.re) {
            return Err(Error::Format(format!("`re` must be {n}x{n}")));
        }
        // A missing imaginary part is accepted as all zeros.
        if !j.im.is_empty() && !shape_ok(&j.im) {
            return Err(Error::Format(format!("`im` must be {n}x{n}")));
        }
        let m = Mat::from_fn(n, n, |r, c| {
            let im = if j.im.is_empty() { 0.0 } else { j.im[r][c] };
            c64(j.re[r][c], im)
        });
        validate(&m)?;
        Ok(m)
    }
}

pub fn to_json_string(m: &Mat) -> String {
    serde_json::to_string(&MatJson::from(m)).expect("matrix serialization")
}

pub fn from_json_str(s: &str) -> Result<Mat> {
    let j: MatJson = serde_json::from_str(s)?;
    Mat::try_from(j)
}

pub fn read_json<R: Read>(r: R) -> Result<Mat> {
    let j: MatJson = serde_json::from_reader(r)?;
    Mat::try_from(j)
}

pub fn write_binary<W: Write>(mut w: W, m: &Mat) -> Result<()> {
    validate(m)?;
    let n = m.nrows();
    w.write_all(&(n as u64).to_le_bytes())?;
    // nalgebra storage is column-major already.
    for z in m.iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Mat> {
    let mut header = [0u8; 8];
    r.read_exact(&mut header)?;
    let n = usize::try_from(u64::from_le_bytes(header))
        .map_err(|_| Error::Format("dimension header out of range".into()))?;
    let count = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(16))
        .ok_or_else(|| Error::Format("dimension header out of range".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count {
        return Err(Error::Format(format!(
            "expected {count} payload bytes for dim {n}, found {}",
            body.len()
        )));
    }
    let entries: Vec<_> = body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            c64(re, im)
        })
        .collect();
    let m = Mat::from_vec(n, n, entries);
    validate(&m)?;
    Ok(m)
}

/// Reads either container. A leading `{` may also be the low byte of a binary
/// header (dim 123), so JSON failures fall back to binary.
pub fn read_any(bytes: &[u8]) -> Result<Mat> {
    match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'{') => read_json(bytes).or_else(|json_err| read_binary(bytes).map_err(|_| json_err)),
        _ => read_binary(bytes),
    }
}

/// `#[serde(with = "serde_mat")]` for `Mat` fields.
pub mod serde_mat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let j = MatJson::deserialize(d)?;
        Mat::try_from(j).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "serde_mats")]` for `Vec<Mat>` fields.
pub mod serde_mats {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
        let js: Vec<MatJson> = ms.iter().map(MatJson::from).collect();
        js.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat>, D::Error> {
        let js = Vec::<MatJson>::deserialize(d)?;
        js.into_iter()
            .map(|j| Mat::try_from(j).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn json_layout_is_row_major() {
        let m = Mat::from_fn(2, 2, |i, j| c64((2 * i + j) as f64, -(j as f64)));
        let v: serde_json::Value = serde_json::from_str(&to_json_string(&m)).unwrap();
        assert_eq!(v["dim"], 2);
        assert_eq!(v["re"][0][1], 1.0);
        assert_eq!(v["re"][1][0], 2.0);
        assert_eq!(v["im"][0][1], -1.0);
    }

    #[test]
    fn binary_layout_is_column_major_interleaved() {
        let m = Mat::from_fn(2, 2, |i, j| c64((2 * i + j) as f64, 0.5));
        let mut buf = Vec::new();
        write_binary(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 16);
        assert_eq!(u64::from_le_bytes(buf[..8].try_into().unwrap()), 2);
        // second stored entry is (row 1, col 0) = 2
        let second = f64::from_le_bytes(buf[24..32].try_into().unwrap());
        assert_eq!(second, 2.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(from_json_str(r#"{"dim":2,"re":[[1,2]],"im":[]}"#).is_err());
        assert!(read_binary(&[2u8, 0, 0, 0, 0, 0, 0, 0, 1][..]).is_err());
        let m = from_json_str(r#"{"dim":1,"re":[[3]],"im":[]}"#).unwrap();
        assert_eq!(m[(0, 0)], c64(3.0, 0.0));
    }

    proptest! {
        #[test]
        fn containers_round_trip(n in 0usize..5, seed in proptest::collection::vec(-1e6f64..1e6, 50)) {
            let m = Mat::from_fn(n, n, |i, j| c64(seed[i * 5 + j], seed[25 + i * 5 + j]));
            prop_assert_eq!(&from_json_str(&to_json_string(&m)).unwrap(), &m);
            let mut buf = Vec::new();
            write_binary(&mut buf, &m).unwrap();
            prop_assert_eq!(&read_any(&buf).unwrap(), &m);
        }
    }
}
