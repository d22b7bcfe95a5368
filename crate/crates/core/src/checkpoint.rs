//! Versioned binary checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic    8 bytes  "SOFCLRCK"
//! version  u32      currently 1
//! encoder  d_in, #hidden, hidden..., d           (u64 each)
//! disc     d, #hidden, hidden..., k              (u64 each)
//! seed     u64
//! t        u64
//! eps0'    f64
//! vectors  w, w', u, m_tilde, adam_m, adam_v     (u64 length + f64 data)
//! epoch    permutation (u64 length + u64 data), cursor u64
//! annot    annotated indices (u64 length + u64 data)
//! rng      4 x u128 word positions (main batch, attr batch, main aug, attr aug)
//! ```
//!
//! The RNG streams are stored as word positions only; together with the seed
//! they reconstruct the exact generator states, so a save/load round trip in
//! the middle of training is bitwise-invisible to the remaining iterations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{DiscriminatorSpec, EncoderSpec};
use crate::rng::{stream_at, Stream};
use crate::train::TrainState;

const MAGIC: &[u8; 8] = b"SOFCLRCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    path: &Path,
    enc: &EncoderSpec,
    disc: &DiscriminatorSpec,
    state: &TrainState,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    put_u64(&mut w, enc.d_in as u64)?;
    put_usize_list(&mut w, &enc.hidden)?;
    put_u64(&mut w, enc.d as u64)?;
    put_u64(&mut w, disc.d as u64)?;
    put_usize_list(&mut w, &disc.hidden)?;
    put_u64(&mut w, disc.k as u64)?;

    put_u64(&mut w, state.seed)?;
    put_u64(&mut w, state.t as u64)?;
    w.write_all(&state.eps0_prime.to_le_bytes())?;
    for v in [
        &state.w,
        &state.w_prime,
        &state.u,
        &state.m_tilde,
        &state.adam_m,
        &state.adam_v,
    ] {
        put_f64_list(&mut w, v)?;
    }
    put_usize_list(&mut w, &state.epoch_perm)?;
    put_u64(&mut w, state.epoch_pos as u64)?;
    put_usize_list(&mut w, &state.annotated)?;
    for rng in [
        &state.rng_batch_main,
        &state.rng_batch_attr,
        &state.rng_aug_main,
        &state.rng_aug_attr,
    ] {
        w.write_all(&rng.get_word_pos().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderSpec, DiscriminatorSpec, TrainState)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    take(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "not a checkpoint file (magic {:02x?})",
            &magic
        )));
    }
    let mut vbuf = [0u8; 4];
    take(&mut r, &mut vbuf)?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (this build reads {VERSION})"
        )));
    }

    let enc = EncoderSpec {
        d_in: get_u64(&mut r)? as usize,
        hidden: get_usize_list(&mut r)?,
        d: get_u64(&mut r)? as usize,
    };
    let disc = DiscriminatorSpec {
        d: get_u64(&mut r)? as usize,
        hidden: get_usize_list(&mut r)?,
        k: get_u64(&mut r)? as usize,
    };

    let seed = get_u64(&mut r)?;
    let t = get_u64(&mut r)? as usize;
    let eps0_prime = get_f64(&mut r)?;
    let w = get_f64_list(&mut r)?;
    let w_prime = get_f64_list(&mut r)?;
    let u = get_f64_list(&mut r)?;
    let m_tilde = get_f64_list(&mut r)?;
    let adam_m = get_f64_list(&mut r)?;
    let adam_v = get_f64_list(&mut r)?;
    let epoch_perm = get_usize_list(&mut r)?;
    let epoch_pos = get_u64(&mut r)? as usize;
    let annotated = get_usize_list(&mut r)?;

    let mut pos = [0u128; 4];
    for p in &mut pos {
        let mut buf = [0u8; 16];
        take(&mut r, &mut buf)?;
        *p = u128::from_le_bytes(buf);
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }

    let state = TrainState {
        w,
        w_prime,
        u,
        m_tilde,
        adam_m,
        adam_v,
        t,
        eps0_prime,
        seed,
        epoch_perm,
        epoch_pos,
        annotated,
        rng_batch_main: stream_at(seed, Stream::BatchMain, pos[0]),
        rng_batch_attr: stream_at(seed, Stream::BatchAttr, pos[1]),
        rng_aug_main: stream_at(seed, Stream::AugmentMain, pos[2]),
        rng_aug_attr: stream_at(seed, Stream::AugmentAttr, pos[3]),
    };
    Ok((enc, disc, state))
}

// ── little-endian scalar/list plumbing ──

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_usize_list<W: Write>(w: &mut W, v: &[usize]) -> Result<()> {
    put_u64(w, v.len() as u64)?;
    for &x in v {
        put_u64(w, x as u64)?;
    }
    Ok(())
}

fn put_f64_list<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    put_u64(w, v.len() as u64)?;
    for &x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn take<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("checkpoint file is truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    take(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    take(r, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

const LIST_CAP: u64 = 1 << 32;

fn list_len<R: Read>(r: &mut R) -> Result<usize> {
    let len = get_u64(r)?;
    if len > LIST_CAP {
        return Err(Error::Format(format!("implausible list length {len} in checkpoint")));
    }
    Ok(len as usize)
}

fn get_usize_list<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let len = list_len(r)?;
    (0..len).map(|_| get_u64(r).map(|v| v as usize)).collect()
}

fn get_f64_list<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let len = list_len(r)?;
    (0..len).map(|_| get_f64(r)).collect()
}
