//! Binary checkpoints of a policy and its critics.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "TMDPCKPT" | version u32 | dag hash [32] | config hash [32] | sections u32
//! section: role u8 (0 policy, 1 critic) | objective u32 | kind u8 | dims u64 u64
//!          | outputs u64 | loss f64 | samples u64 | count u64 | params f64 × count
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::scalar::{cast, to_f64, Scalar};

use super::approx::{ApproxKind, Approximator};
use super::critic::{Critic, CriticSet};
use super::policy::Policy;

pub const MAGIC: &[u8; 8] = b"TMDPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("{what} hash mismatch: checkpoint {found}, expected {expected}")]
    ChecksumMismatch { what: &'static str, found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub dag_hash: [u8; 32],
    pub config_hash: [u8; 32],
    pub policy: Policy<T>,
    pub critics: CriticSet<T>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl<T: Scalar> Checkpoint<T> {
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.dag_hash)?;
        w.write_all(&self.config_hash)?;
        w.write_all(&(1 + self.critics.len() as u32).to_le_bytes())?;
        write_section(&mut w, 0, 0, self.policy.approximator(), 0.0, 0)?;
        for c in self.critics.iter() {
            write_section(&mut w, 1, c.objective as u32, &c.approx, to_f64(c.loss), c.samples as u64)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut dag_hash = [0u8; 32];
        let mut config_hash = [0u8; 32];
        read_exact(&mut r, &mut dag_hash)?;
        read_exact(&mut r, &mut config_hash)?;
        let sections = read_u32(&mut r)?;
        let mut policy = None;
        let mut critics = CriticSet::new();
        for _ in 0..sections {
            let mut role = [0u8; 1];
            read_exact(&mut r, &mut role)?;
            let objective = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            read_exact(&mut r, &mut code)?;
            let dims = [read_u64(&mut r)?, read_u64(&mut r)?];
            let kind = ApproxKind::from_code(code[0], dims).ok_or_else(|| CheckpointError::Malformed(format!("unknown kind {}", code[0])))?;
            let n_out = read_u64(&mut r)? as usize;
            let loss = f64::from_bits(read_u64(&mut r)?);
            let samples = read_u64(&mut r)? as usize;
            let count = read_u64(&mut r)? as usize;
            if count != kind.n_params(n_out) {
                return Err(CheckpointError::Malformed(format!("{count} parameters for a {} approximator expecting {}", kind.name(), kind.n_params(n_out))));
            }
            let mut params = Vec::with_capacity(count);
            for _ in 0..count {
                params.push(cast::<T>(f64::from_bits(read_u64(&mut r)?)));
            }
            let approx = Approximator::from_params(kind, n_out, params).expect("count checked");
            match role[0] {
                0 if policy.is_none() => policy = Some(Policy::from_approximator(approx)),
                1 => critics.insert(Critic { objective, approx, loss: cast(loss), samples }),
                other => return Err(CheckpointError::Malformed(format!("unexpected section role {other}"))),
            }
        }
        let policy = policy.ok_or_else(|| CheckpointError::Malformed("no policy section".into()))?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self { dag_hash, config_hash, policy, critics })
    }

    /// Fails with [`CheckpointError::ChecksumMismatch`] unless both hashes match.
    pub fn verify(&self, dag_hash: &[u8; 32], config_hash: Option<&[u8; 32]>) -> Result<(), CheckpointError> {
        if &self.dag_hash != dag_hash {
            return Err(CheckpointError::ChecksumMismatch { what: "dag", found: hex(&self.dag_hash), expected: hex(dag_hash) });
        }
        if let Some(h) = config_hash {
            if &self.config_hash != h {
                return Err(CheckpointError::ChecksumMismatch { what: "config", found: hex(&self.config_hash), expected: hex(h) });
            }
        }
        Ok(())
    }
}

fn write_section<T: Scalar, W: Write>(w: &mut W, role: u8, objective: u32, a: &Approximator<T>, loss: f64, samples: u64) -> io::Result<()> {
    w.write_all(&[role])?;
    w.write_all(&objective.to_le_bytes())?;
    w.write_all(&[a.kind().code()])?;
    for d in a.kind().dims() {
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&(a.n_out() as u64).to_le_bytes())?;
    w.write_all(&loss.to_bits().to_le_bytes())?;
    w.write_all(&samples.to_le_bytes())?;
    w.write_all(&(a.n_params() as u64).to_le_bytes())?;
    for &p in a.params() {
        w.write_all(&to_f64(p).to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::Malformed("truncated".into()),
        _ => CheckpointError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
