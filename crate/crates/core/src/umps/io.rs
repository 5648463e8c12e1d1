use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use super::UniformMps;
use crate::error::{Error, Result};
use crate::model::{CELL, PHYS_DIM};
use crate::C64;

/// Checkpoint metadata: ordered `key=value` pairs.
pub type CheckpointMeta = BTreeMap<String, String>;

const MAGIC: &[u8; 5] = b"UMPS1";

/// Binary checkpoint layout:
///
/// ```text
/// magic "UMPS1"
/// u32 LE unit-cell size (2), u32 LE chi, u32 LE physical dimension (2)
/// tensors A_L[0], A_L[1], A_R[0], A_R[1], C[0], C[1]
///   row-major, each entry as (re: f64 LE, im: f64 LE)
/// u32 LE metadata byte length, then that many UTF-8 bytes of "key=value\n"
/// ```
pub fn write_checkpoint(path: &Path, state: &UniformMps, meta: &CheckpointMeta) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(CELL as u32).to_le_bytes());
    buf.extend_from_slice(&(state.chi() as u32).to_le_bytes());
    buf.extend_from_slice(&(PHYS_DIM as u32).to_le_bytes());
    for i in 0..CELL {
        push_entries(&mut buf, state.a_l(i).iter());
    }
    for i in 0..CELL {
        push_entries(&mut buf, state.a_r(i).iter());
    }
    for i in 0..CELL {
        push_entries(&mut buf, state.c(i).iter());
    }
    let mut meta_bytes: Vec<u8> = Vec::new();
    for (k, v) in meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::CheckpointFormat(format!(
                "metadata key/value may not contain '=' in keys or newlines: {k}"
            )));
        }
        meta_bytes.extend_from_slice(k.as_bytes());
        meta_bytes.push(b'=');
        meta_bytes.extend_from_slice(v.as_bytes());
        meta_bytes.push(b'\n');
    }
    buf.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_bytes);

    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(UniformMps, CheckpointMeta)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = 0usize;

    let take = |cur: &mut usize, n: usize| -> Result<&[u8]> {
        if *cur + n > bytes.len() {
            return Err(Error::CheckpointFormat("truncated checkpoint".into()));
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };

    if take(&mut cur, 5)? != MAGIC {
        return Err(Error::CheckpointFormat("bad magic".into()));
    }
    let rd_u32 = |cur: &mut usize| -> Result<u32> {
        let b = take(cur, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let cell = rd_u32(&mut cur)? as usize;
    let chi = rd_u32(&mut cur)? as usize;
    let d = rd_u32(&mut cur)? as usize;
    if cell != CELL || d != PHYS_DIM {
        return Err(Error::CheckpointFormat(format!(
            "unsupported cell/physical dimensions {cell}/{d}"
        )));
    }
    if chi == 0 || chi > 1 << 16 {
        return Err(Error::CheckpointFormat(format!("implausible chi {chi}")));
    }

    let rd_tensor3 = |cur: &mut usize| -> Result<Array3<C64>> {
        let n = chi * d * chi;
        let raw = take(cur, 16 * n)?;
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let re = f64::from_le_bytes(raw[16 * i..16 * i + 8].try_into().unwrap());
            let im = f64::from_le_bytes(raw[16 * i + 8..16 * i + 16].try_into().unwrap());
            v.push(C64::new(re, im));
        }
        Array3::from_shape_vec((chi, d, chi), v)
            .map_err(|e| Error::CheckpointFormat(e.to_string()))
    };
    let a_l = [rd_tensor3(&mut cur)?, rd_tensor3(&mut cur)?];
    let a_r = [rd_tensor3(&mut cur)?, rd_tensor3(&mut cur)?];

    let rd_mat = |cur: &mut usize| -> Result<Array2<C64>> {
        let n = chi * chi;
        let raw = take(cur, 16 * n)?;
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let re = f64::from_le_bytes(raw[16 * i..16 * i + 8].try_into().unwrap());
            let im = f64::from_le_bytes(raw[16 * i + 8..16 * i + 16].try_into().unwrap());
            v.push(C64::new(re, im));
        }
        Array2::from_shape_vec((chi, chi), v).map_err(|e| Error::CheckpointFormat(e.to_string()))
    };
    let c = [rd_mat(&mut cur)?, rd_mat(&mut cur)?];

    let meta_len = rd_u32(&mut cur)? as usize;
    let meta_raw = take(&mut cur, meta_len)?;
    let text = std::str::from_utf8(meta_raw)
        .map_err(|_| Error::CheckpointFormat("metadata is not UTF-8".into()))?;
    let mut meta = CheckpointMeta::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::CheckpointFormat(format!("bad metadata line: {line}")))?;
        meta.insert(k.to_string(), v.to_string());
    }

    let state = UniformMps::from_parts(a_l, a_r, c)?;
    Ok((state, meta))
}

fn push_entries<'a>(buf: &mut Vec<u8>, it: impl Iterator<Item = &'a C64>) {
    for z in it {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::super::random_umps;
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let dir = std::env::temp_dir().join(format!("umps-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.umps");

        let s = random_umps(6, 77).unwrap();
        let mut meta = CheckpointMeta::new();
        meta.insert("seed".into(), "77".into());
        meta.insert("tol".into(), "1e-10".into());
        write_checkpoint(&path, &s, &meta).unwrap();

        let (t, meta2) = read_checkpoint(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(t.chi(), 6);
        for i in 0..CELL {
            assert_eq!(s.a_l(i), t.a_l(i));
            assert_eq!(s.a_r(i), t.a_r(i));
            assert_eq!(s.c(i), t.c(i));
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn header_layout_is_stable() {
        let dir = std::env::temp_dir().join(format!("umps-hdr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.umps");
        let s = random_umps(2, 1).unwrap();
        write_checkpoint(&path, &s, &CheckpointMeta::new()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"UMPS1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 2);
        // 4 site tensors (2*2*2 entries) + 2 center matrices (2*2), 16 bytes
        // per entry, plus 17-byte header and 4-byte empty metadata length.
        assert_eq!(bytes.len(), 17 + 16 * (4 * 8 + 2 * 4) + 4);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = std::env::temp_dir().join(format!("umps-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.umps");
        std::fs::write(&path, b"NOTAMAGIC").unwrap();
        assert!(read_checkpoint(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
