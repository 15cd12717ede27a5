//! Binary interchange for externally computed encodings.
//!
//! Layout (little-endian): magic `BLEV1`, `u32 d`, `u32 count`, then per example
//! `u32 n`, `u32 m` and `(n + m) · d` `f32` values, statement rows first, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encoder::EncodedPair;
use crate::error::{Error, Result};
use crate::tensor::Mat;

pub const MAGIC: &[u8; 5] = b"BLEV1";

pub fn write_embeddings<W: Write>(mut w: W, dim: usize, pairs: &[EncodedPair<f32>]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&u32_of(dim)?.to_le_bytes())?;
    w.write_all(&u32_of(pairs.len())?.to_le_bytes())?;
    for p in pairs {
        if p.statement.cols != dim || p.text.cols != dim {
            return Err(Error::Dimension(format!(
                "pair has width {}/{}, file declares {dim}",
                p.statement.cols, p.text.cols
            )));
        }
        w.write_all(&u32_of(p.statement.rows)?.to_le_bytes())?;
        w.write_all(&u32_of(p.text.rows)?.to_le_bytes())?;
        for v in p.statement.data.iter().chain(&p.text.data) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_embeddings(path: &Path, dim: usize, pairs: &[EncodedPair<f32>]) -> Result<()> {
    write_embeddings(BufWriter::new(File::create(path)?), dim, pairs)
}

fn u32_of(x: usize) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::Format(format!("{x} does not fit in u32")))
}

/// Streaming reader yielding one [`EncodedPair`] per stored example.
pub struct EmbeddingReader<R> {
    inner: R,
    dim: usize,
    count: usize,
    read: usize,
}

impl<R: Read> EmbeddingReader<R> {
    /// Reads the header; `expected_dim` guards against a model/file width mismatch.
    pub fn new(mut inner: R, expected_dim: Option<usize>) -> Result<Self> {
        let mut magic = [0u8; 5];
        read_exact(&mut inner, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format("missing BLEV1 magic".into()));
        }
        let dim = read_u32(&mut inner, "dimension")? as usize;
        let count = read_u32(&mut inner, "example count")? as usize;
        if let Some(d) = expected_dim {
            if d != dim {
                return Err(Error::Dimension(format!("file has d={dim}, model expects d={d}")));
            }
        }
        Ok(Self {
            inner,
            dim,
            count,
            read: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn read_pair(&mut self) -> Result<EncodedPair<f32>> {
        let n = read_u32(&mut self.inner, "statement length")? as usize;
        let m = read_u32(&mut self.inner, "text length")? as usize;
        let statement = read_mat(&mut self.inner, n, self.dim)?;
        let text = read_mat(&mut self.inner, m, self.dim)?;
        Ok(EncodedPair { statement, text })
    }
}

impl<R: Read> Iterator for EmbeddingReader<R> {
    type Item = Result<EncodedPair<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read == self.count {
            return None;
        }
        self.read += 1;
        let item = self.read_pair();
        if item.is_err() {
            self.read = self.count;
        }
        Some(item)
    }
}

pub fn load_imported_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<EmbeddingReader<BufReader<File>>> {
    EmbeddingReader::new(BufReader::new(File::open(path)?), expected_dim)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_mat<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Mat<f32>> {
    let mut bytes = vec![0u8; rows * cols * 4];
    read_exact(r, &mut bytes, "vector block")?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Mat::from_vec(rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(n: usize, m: usize, d: usize, seed: f32) -> EncodedPair<f32> {
        let v = |k: usize| (0..k * d).map(|i| (i as f32 * 0.731 + seed).sin() * 1e3).collect();
        EncodedPair {
            statement: Mat::from_vec(n, d, v(n)),
            text: Mat::from_vec(m, d, v(m)),
        }
    }

    #[test]
    fn reads_declared_shapes() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 8, &[pair(3, 4, 8, 0.5)]).unwrap();
        let pairs: Vec<_> = EmbeddingReader::new(&buf[..], Some(8))
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].statement.shape(), (3, 8));
        assert_eq!(pairs[0].text.shape(), (4, 8));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 8, &[pair(1, 1, 8, 0.0)]).unwrap();
        assert!(matches!(EmbeddingReader::new(&buf[..], Some(16)), Err(Error::Dimension(_))));
    }

    #[test]
    fn truncation_and_bad_magic_are_errors() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 4, &[pair(2, 2, 4, 0.0)]).unwrap();
        buf.truncate(buf.len() - 3);
        let mut r = EmbeddingReader::new(&buf[..], None).unwrap();
        assert!(matches!(r.next(), Some(Err(Error::Format(_)))));
        assert!(r.next().is_none());
        assert!(EmbeddingReader::new(&b"BLEV2\0\0\0\0"[..], None).is_err());
        assert!(EmbeddingReader::new(&b"BLE"[..], None).is_err());
    }

    proptest! {
        #[test]
        fn write_read_preserves_bits(
            dims in (1usize..6, proptest::collection::vec((1usize..5, 1usize..7), 0..4)),
            vals in proptest::collection::vec(any::<f32>(), 256),
        ) {
            let (d, shapes) = dims;
            let mut k = 0;
            let mut next = |len: usize| -> Vec<f32> {
                (0..len).map(|_| { k += 1; vals[k % vals.len()] }).collect()
            };
            let pairs: Vec<_> = shapes
                .iter()
                .map(|&(n, m)| EncodedPair {
                    statement: Mat::from_vec(n, d, next(n * d)),
                    text: Mat::from_vec(m, d, next(m * d)),
                })
                .collect();
            let mut buf = Vec::new();
            write_embeddings(&mut buf, d, &pairs).unwrap();
            let back: Vec<_> = EmbeddingReader::new(&buf[..], Some(d)).unwrap().collect::<Result<_>>().unwrap();
            prop_assert_eq!(back.len(), pairs.len());
            for (a, b) in back.iter().zip(&pairs) {
                let bits = |m: &Mat<f32>| m.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&a.statement), bits(&b.statement));
                prop_assert_eq!(bits(&a.text), bits(&b.text));
            }
        }
    }
}
