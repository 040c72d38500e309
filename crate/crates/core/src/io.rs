//! File formats for paths.
//!
//! CSV (one path per file):
//!
//! ```text
//! # junction-sim path v1 delta=0.01
//! t,x,edge,N,dW
//! 0,0.5,1,0,0.0012
//! ...
//! 0.95,0.3,2,5,
//! ```
//!
//! `dW` on row `k` is the increment over `[t_k, t_{k+1}]`, so the last row
//! leaves it empty. Floats use Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless.
//!
//! Binary, little-endian. A single path (`JSIMPATH`):
//!
//! ```text
//! magic   [u8; 8] = "JSIMPATH"
//! version u32     = 1
//! delta   f64
//! n       u64     grid points
//! t       [f64; n]
//! x       [f64; n]
//! edge    [u32; n]
//! N       [u64; n]
//! dW      [f64; n - 1]
//! ```
//!
//! An ensemble pack (`JSIMPACK`) is `magic, version u32 = 1, count u64`
//! followed by `count` single-path records.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};

use crate::path::{PathError, PathRecord};

pub const CSV_PATH_HEADER: &str = "# junction-sim path v1";
const PATH_MAGIC: &[u8; 8] = b"JSIMPATH";
const PACK_MAGIC: &[u8; 8] = b"JSIMPACK";
const BINARY_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> PathError {
    PathError::Format(msg.into())
}

/// Renders a path as versioned CSV.
pub fn path_to_csv(p: &PathRecord) -> String {
    let mut out = String::with_capacity(p.len() * 48);
    let _ = writeln!(out, "{CSV_PATH_HEADER} delta={}", p.delta());
    out.push_str("t,x,edge,N,dW\n");
    for k in 0..p.len() {
        let _ = write!(
            out,
            "{},{},{},{},",
            p.times()[k],
            p.positions()[k],
            p.edges()[k],
            p.jump_counter()[k]
        );
        if let Some(w) = p.noise_increments().get(k) {
            let _ = write!(out, "{w}");
        }
        out.push('\n');
    }
    out
}

pub fn write_path_csv<W: Write>(p: &PathRecord, mut w: W) -> Result<(), PathError> {
    w.write_all(path_to_csv(p).as_bytes())?;
    Ok(())
}

/// Parses the CSV written by [`write_path_csv`].
pub fn read_path_csv<R: BufRead>(r: R) -> Result<PathRecord, PathError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_err("empty file"))?;
    let header = header?;
    let delta_text = header
        .strip_prefix(CSV_PATH_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("delta="))
        .ok_or_else(|| format_err(format!("line 1: expected `{CSV_PATH_HEADER} delta=...`")))?;
    let delta: f64 = delta_text
        .parse()
        .map_err(|_| format_err(format!("line 1: bad delta `{delta_text}`")))?;
    match lines.next() {
        Some((_, Ok(cols))) if cols.trim() == "t,x,edge,N,dW" => {}
        _ => return Err(format_err("line 2: expected column header `t,x,edge,N,dW`")),
    }

    let (mut t, mut x, mut e, mut n, mut dw) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format_err(format!("line {lineno}: expected 5 fields, got {}", fields.len())));
        }
        let bad = |col: &str| format_err(format!("line {lineno}: bad {col} value"));
        t.push(fields[0].parse::<f64>().map_err(|_| bad("t"))?);
        x.push(fields[1].parse::<f64>().map_err(|_| bad("x"))?);
        e.push(fields[2].parse::<usize>().map_err(|_| bad("edge"))?);
        n.push(fields[3].parse::<u64>().map_err(|_| bad("N"))?);
        if !fields[4].is_empty() {
            dw.push(fields[4].parse::<f64>().map_err(|_| bad("dW"))?);
        }
    }
    PathRecord::new(t, x, e, n, dw, delta)
}

fn put_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode_path(p: &PathRecord, buf: &mut Vec<u8>) {
    buf.extend_from_slice(PATH_MAGIC);
    buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    buf.extend_from_slice(&p.delta().to_le_bytes());
    buf.extend_from_slice(&(p.len() as u64).to_le_bytes());
    put_f64s(buf, p.times());
    put_f64s(buf, p.positions());
    for &e in p.edges() {
        buf.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &c in p.jump_counter() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    put_f64s(buf, p.noise_increments());
}

pub fn path_to_bytes(p: &PathRecord) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + p.len() * 36);
    encode_path(p, &mut buf);
    buf
}

pub fn write_path_binary<W: Write>(p: &PathRecord, mut w: W) -> Result<(), PathError> {
    w.write_all(&path_to_bytes(p))?;
    Ok(())
}

pub fn write_pack<W: Write>(paths: &[PathRecord], mut w: W) -> Result<(), PathError> {
    let mut head = Vec::with_capacity(20);
    head.extend_from_slice(PACK_MAGIC);
    head.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    head.extend_from_slice(&(paths.len() as u64).to_le_bytes());
    w.write_all(&head)?;
    let mut buf = Vec::new();
    for p in paths {
        buf.clear();
        encode_path(p, &mut buf);
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<R: Read>(r: &mut R) -> Result<[u8; 8], PathError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err("truncated record"),
        _ => PathError::Io(e),
    })?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, PathError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| format_err("truncated record"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, PathError> {
    (0..n).map(|_| read_array(r).map(f64::from_le_bytes)).collect()
}

fn read_version<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), PathError> {
    if &read_array(r)? != magic {
        return Err(format_err(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != BINARY_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn read_path_binary<R: Read>(mut r: R) -> Result<PathRecord, PathError> {
    read_version(&mut r, PATH_MAGIC)?;
    let delta = f64::from_le_bytes(read_array(&mut r)?);
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if n == 0 {
        return Err(PathError::Empty);
    }
    let t = read_f64s(&mut r, n)?;
    let x = read_f64s(&mut r, n)?;
    let e = (0..n)
        .map(|_| read_u32(&mut r).map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let c = (0..n)
        .map(|_| read_array(&mut r).map(u64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    let dw = read_f64s(&mut r, n - 1)?;
    PathRecord::new(t, x, e, c, dw, delta)
}

pub fn read_pack<R: Read>(mut r: R) -> Result<Vec<PathRecord>, PathError> {
    read_version(&mut r, PACK_MAGIC)?;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    (0..count).map(|_| read_path_binary(&mut r)).collect()
}
