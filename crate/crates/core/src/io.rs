//! `CTF1` raw tensor files.
//!
//! Layout (little-endian): magic `CTF1`, u8 precision flag (0 = f32, 1 = f64),
//! u8 rank, `rank` u32 extents, then the row-major payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Precision, Tensor};

pub const CTF_MAGIC: &[u8; 4] = b"CTF1";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + t.numel() * t.precision().width());
    write_tensor(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> std::io::Result<()> {
    w.write_all(CTF_MAGIC)?;
    w.write_all(&[t.precision().flag(), t.rank() as u8])?;
    for &e in t.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    match t.precision() {
        Precision::Single => {
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Precision::Double => {
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::TensorFormat(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let mut head = [0u8; 6];
    read_exact(r, &mut head, "header")?;
    if &head[..4] != CTF_MAGIC {
        return Err(Error::TensorFormat("bad magic".into()));
    }
    let precision = Precision::from_flag(head[4])
        .ok_or_else(|| Error::TensorFormat(format!("unknown precision flag {}", head[4])))?;
    let rank = head[5] as usize;
    if rank == 0 {
        return Err(Error::TensorFormat("rank 0".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        read_exact(r, &mut b, "extents")?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::TensorFormat(format!("invalid extents {shape:?}")))?;
    let mut payload = Vec::new();
    let want = numel * precision.width();
    r.take(want as u64).read_to_end(&mut payload)?;
    if payload.len() != want {
        return Err(Error::TensorFormat(format!("truncated payload: {} of {want} bytes", payload.len())));
    }
    let data = match precision {
        Precision::Single => {
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
        }
        Precision::Double => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Tensor::new(&shape, data, precision)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut cursor = bytes;
    let t = read_tensor(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::TensorFormat(format!("{} trailing bytes", cursor.len())));
    }
    Ok(t)
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::from_f64(&[2, 1], vec![1.0, -2.0]).unwrap();
        let b = encode_tensor(&t);
        assert_eq!(&b[..4], b"CTF1");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 2);
        assert_eq!(&b[6..10], &2u32.to_le_bytes());
        assert_eq!(&b[10..14], &1u32.to_le_bytes());
        assert_eq!(&b[14..22], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 14 + 16);
    }

    #[test]
    fn truncation_and_garbage_rejected() {
        let t = Tensor::from_f64(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = encode_tensor(&t);
        for cut in [0, 3, 7, b.len() - 1] {
            assert!(matches!(decode_tensor(&b[..cut]), Err(Error::TensorFormat(_))));
        }
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_tensor(&extra).is_err());
        let mut bad = b;
        bad[0] = b'X';
        assert!(decode_tensor(&bad).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            shape in prop::collection::vec(1usize..4, 1..4),
            single in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let precision = if single { Precision::Single } else { Precision::Double };
            let n: usize = shape.iter().product();
            let data = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 1000) as f64) / 7.0 - 50.0).collect();
            let t = Tensor::new(&shape, data, precision).unwrap();
            let bytes = encode_tensor(&t);
            let back = decode_tensor(&bytes).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(encode_tensor(&back), bytes);
        }
    }
}
