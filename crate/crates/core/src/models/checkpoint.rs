//! Binary parameter checkpoints.
//!
//! Layout: the 5-byte magic `DGSN1`, then for each parameter in order:
//! name length (u32 LE), UTF-8 name bytes, rank (u32 LE), each dimension
//! (u64 LE), and the row-major values as f64 LE. The file ends after the
//! last parameter.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Array, ParamSet};

pub const MAGIC: &[u8; 5] = b"DGSN1";

pub fn write_params(params: &ParamSet, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for (name, a) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(a.shape().len() as u32).to_le_bytes())?;
        for &d in a.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in a.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_params(r: &mut impl Read) -> Result<ParamSet> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut params = ParamSet::new();
    while cur.pos < buf.len() {
        let n = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(n)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_owned();
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= buf.len() - cur.pos))
            .ok_or_else(|| Error::Checkpoint(format!("parameter '{name}' shape {shape:?} exceeds file")))?;
        let data = cur
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let a = Array::new(shape, data).map_err(|e| Error::Checkpoint(format!("parameter '{name}': {e}")))?;
        params.push(name, a);
    }
    Ok(params)
}

pub fn write_checkpoint(params: &ParamSet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_params(params, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamSet> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RecurrentLM;
    use crate::rng::rng_for;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let mut ps = ParamSet::new();
        ps.push("w", Array::vector(vec![1.5]).unwrap());
        let mut buf = Vec::new();
        write_params(&ps, &mut buf).unwrap();
        let mut want = b"DGSN1".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(b"w");
        want.extend(1u32.to_le_bytes());
        want.extend(1u64.to_le_bytes());
        want.extend(1.5f64.to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn model_round_trip_bit_exact() {
        let m = RecurrentLM::new(9, 4, 3, &mut rng_for(2, "ck")).unwrap();
        let mut buf = Vec::new();
        write_params(m.params(), &mut buf).unwrap();
        let back = RecurrentLM::from_params(read_params(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_params(back.params(), &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_corruption() {
        assert!(read_params(&mut &b"XXXXX"[..]).is_err());
        let mut ps = ParamSet::new();
        ps.push("w", Array::vector(vec![1.0, 2.0]).unwrap());
        let mut buf = Vec::new();
        write_params(&ps, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_params(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(vals in proptest::collection::vec(-1e300f64..1e300, 1..40)) {
            let mut ps = ParamSet::new();
            ps.push("v", Array::vector(vals.clone()).unwrap());
            let mut buf = Vec::new();
            write_params(&ps, &mut buf).unwrap();
            let back = read_params(&mut buf.as_slice()).unwrap();
            let bits: Vec<u64> = back.get(0).data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = vals.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, want);
        }
    }
}
