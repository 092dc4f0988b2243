//! `ADVW` parameter checkpoints.
//!
//! Layout (little-endian): magic `ADVW`, version `u16`, parameter count
//! `u32`, then per parameter a `u16` name length, the UTF-8 name, rank as
//! `u8`, `rank` dimensions as `u32`, and the raw `f32` data.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"ADVW";
pub const VERSION: u16 = 1;

pub fn write_checkpoint<'a, W: Write>(
    mut w: W,
    entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    let entries: Vec<_> = entries.into_iter().collect();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        let bytes = name.as_bytes();
        let len =
            u16::try_from(bytes.len()).map_err(|_| Error::Contract(format!("parameter name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[4u8])?;
        for d in t.shape().dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::parse("ADVW checkpoint", format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::parse("ADVW checkpoint", format!("bad magic {magic:?}")));
    }
    let mut b2 = [0u8; 2];
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b2, "version")?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(Error::parse(
            "ADVW checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    read_exact(&mut r, &mut b4, "parameter count")?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        read_exact(&mut r, &mut b2, "name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_exact(&mut r, &mut name, "name")?;
        let name =
            String::from_utf8(name).map_err(|_| Error::parse("ADVW checkpoint", "parameter name is not UTF-8"))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank, "rank")?;
        let rank = rank[0] as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::parse(
                "ADVW checkpoint",
                format!("{name}: unsupported rank {rank}"),
            ));
        }
        let mut dims = [1usize; 4];
        for i in 0..rank {
            read_exact(&mut r, &mut b4, "dimension")?;
            dims[4 - rank + i] = u32::from_le_bytes(b4) as usize;
        }
        let shape = Shape::from(dims);
        let mut raw = vec![0u8; shape.numel() * 4];
        read_exact(&mut r, &mut raw, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::from_vec(shape, data)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor)> {
        vec![
            (
                "enc1.weight".into(),
                Tensor::from_vec([2, 1, 1, 2], vec![1.5, -0.0, f32::MIN_POSITIVE, 3e8]).unwrap(),
            ),
            ("enc1.bias".into(), Tensor::zeros([1, 2, 1, 1])),
        ]
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, sample().iter().map(|(n, t)| (n.as_str(), t))).unwrap();
        assert_eq!(&buf[..4], b"ADVW");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..10], &[2, 0, 0, 0]);
        assert_eq!(&buf[10..12], &[11, 0]);
        assert_eq!(&buf[12..23], b"enc1.weight");
        assert_eq!(buf[23], 4);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, sample().iter().map(|(n, t)| (n.as_str(), t))).unwrap();
        for cut in [0, 3, 9, 20, buf.len() - 1] {
            assert!(
                matches!(read_checkpoint(&buf[..cut]), Err(Error::Parse { .. })),
                "cut {cut}"
            );
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Parse { .. })));
        let mut badv = buf;
        badv[4] = 9;
        assert!(matches!(read_checkpoint(&badv[..]), Err(Error::Parse { .. })));
    }

    #[test]
    fn lower_rank_is_left_padded() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"ADVW");
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.push(b'b');
        buf.push(1);
        buf.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let r = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(r[0].1.shape(), Shape::new(1, 1, 1, 3));
        assert_eq!(r[0].1.data(), &[1.0, 2.0, 3.0]);
    }
}
