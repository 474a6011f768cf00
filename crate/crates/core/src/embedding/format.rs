//! The `SEMB` embedding file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "SEMB"            4 bytes
//! version u32 = 1          4 bytes
//! n       u64              8 bytes
//! d       u64              8 bytes
//! ids     n x (u32 length, UTF-8 bytes)
//! payload n*d float32, row-major
//! ```

use std::path::Path;

use super::{EmbeddingError, EmbeddingMatrix, Result};

pub const MAGIC: &[u8; 4] = b"SEMB";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    if matrix.is_empty() {
        return Err(EmbeddingError::Format(
            "cannot write an empty matrix".into(),
        ));
    }
    let id_bytes: usize = matrix.ids().iter().map(|id| 4 + id.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + id_bytes + matrix.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.len() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.dims() as u64).to_le_bytes());
    for id in matrix.ids() {
        let len = u32::try_from(id.len())
            .map_err(|_| EmbeddingError::Format(format!("id of {} bytes is too long", id.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in matrix.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.buf.len() - self.pos;
        if remaining < len {
            return Err(EmbeddingError::Format(format!(
                "truncated {what}: expected {len} bytes, found {remaining}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingError::Format(format!(
            "truncated header: expected {HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(EmbeddingError::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(EmbeddingError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let n = cur.u64("row count")?;
    let d = cur.u64("dimensionality")?;
    if n == 0 || d == 0 {
        return Err(EmbeddingError::Format(format!(
            "n and d must be positive, found n={n} d={d}"
        )));
    }
    // Each id needs at least its 4-byte length prefix; bail out before
    // allocating for a corrupt count.
    let n_usize = usize::try_from(n)
        .ok()
        .filter(|&n| n <= (bytes.len() - HEADER_LEN) / 4)
        .ok_or_else(|| {
            EmbeddingError::Format(format!(
                "truncated id block: {n} ids cannot fit in {} bytes",
                bytes.len() - HEADER_LEN
            ))
        })?;
    let mut ids = Vec::with_capacity(n_usize);
    for i in 0..n_usize {
        let len = cur.u32("id length")? as usize;
        let raw = cur.take(len, "id")?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| EmbeddingError::Format(format!("id {i} is not valid UTF-8")))?;
        ids.push(id.to_owned());
    }
    let expected = usize::try_from(d)
        .ok()
        .and_then(|d| d.checked_mul(n_usize))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| EmbeddingError::Format(format!("n={n} x d={d} overflows")))?;
    let actual = bytes.len() - cur.pos;
    if actual != expected {
        return Err(EmbeddingError::Format(format!(
            "payload size mismatch: expected {expected} bytes, found {actual}"
        )));
    }
    let data = bytes[cur.pos..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(ids, d as usize, data).map_err(|e| EmbeddingError::Format(e.to_string()))
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let bytes = encode_embeddings(matrix)?;
    std::fs::write(path, bytes).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_embeddings(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_three() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            vec!["a".into(), "bc".into()],
            3,
            vec![1.0, 2.0, 3.0, -4.0, 0.5, 1e-20],
        )
        .unwrap()
    }

    #[test]
    fn two_by_three_size() {
        let bytes = encode_embeddings(&two_by_three()).unwrap();
        // header + (4 + 1) + (4 + 2) id bytes + 2*3*4 payload
        assert_eq!(bytes.len(), 24 + 11 + 24);
        assert_eq!(&bytes[..4], b"SEMB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = EmbeddingMatrix::new(vec![], 4, vec![]).unwrap();
        assert!(matches!(
            encode_embeddings(&m),
            Err(EmbeddingError::Format(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.semb");
        write_embeddings(&two_by_three(), &p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), two_by_three());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_embeddings(&two_by_three()).unwrap();
        bytes[0] = b'X';
        let err = decode_embeddings(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let bytes = encode_embeddings(&two_by_three()).unwrap();
        let err = decode_embeddings(&bytes[..bytes.len() - 5]).unwrap_err();
        assert_eq!(
            err.to_string(),
            "embedding file format: payload size mismatch: expected 24 bytes, found 19"
        );
    }

    #[test]
    fn trailing_bytes_and_short_header_rejected() {
        let mut bytes = encode_embeddings(&two_by_three()).unwrap();
        bytes.push(0);
        assert!(decode_embeddings(&bytes).is_err());
        assert!(decode_embeddings(b"SEMB").is_err());
    }

    #[test]
    fn huge_row_count_does_not_allocate() {
        let mut bytes = encode_embeddings(&two_by_three()).unwrap();
        bytes[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_embeddings(&bytes).is_err());
    }

    #[test]
    fn bad_version() {
        let mut bytes = encode_embeddings(&two_by_three()).unwrap();
        bytes[4] = 2;
        assert!(decode_embeddings(&bytes)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            n in 1usize..8,
            d in 1usize..8,
            seed in proptest::collection::vec(proptest::num::f32::NORMAL | proptest::num::f32::SUBNORMAL | proptest::num::f32::ZERO, 64),
            ids in proptest::collection::vec("\\PC{0,6}", 8),
        ) {
            let data: Vec<f32> = seed.iter().cycle().take(n * d).copied().collect();
            let m = EmbeddingMatrix::new(ids[..n].to_vec(), d, data).unwrap();
            let bytes = encode_embeddings(&m).unwrap();
            let back = decode_embeddings(&bytes).unwrap();
            prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.ids(), m.ids());
            prop_assert_eq!(encode_embeddings(&back).unwrap(), bytes);
        }
    }
}
