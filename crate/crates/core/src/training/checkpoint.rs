//! CGCK checkpoint container.
//!
//! Layout (little endian): magic `CGCK`, u32 version, 32-byte config digest,
//! u64 epoch, RNG state (32-byte seed, u64 stream, u128 word position),
//! classifier label space, parameter stores with Adam moments, the epoch
//! log, and a SHA-256 trailer over all preceding bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use super::{EpochMetrics, TrainConfig};
use crate::diff::{Param, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Completed epochs.
    pub epoch: usize,
    pub config_digest: [u8; 32],
    pub rng: RngState,
    pub classes: Vec<usize>,
    /// Embedder, generator, critic and classifier, in that order.
    pub stores: Vec<ParamStore>,
    pub log: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn verify_config(&self, config: &TrainConfig) -> Result<()> {
        if self.config_digest != config.digest() {
            return Err(Error::Config(
                "checkpoint was written under a different training configuration".into(),
            ));
        }
        Ok(())
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format("count exceeds u32".into()))?;
        self.u32(v);
        Ok(())
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.len(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn tensor(&mut self, t: &Tensor) -> Result<()> {
        self.len(t.shape().len())?;
        for &d in t.shape() {
            self.len(d)?;
        }
        for &v in t.values() {
            self.f64(v);
        }
        Ok(())
    }
    fn opt(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("name is not UTF-8".into()))
    }
    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.len()?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.len()?);
        }
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count.ok_or_else(|| Error::Format("tensor size overflows".into()))?;
        if count.checked_mul(8).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape, data).map_err(|e| Error::Format(format!("bad tensor: {e}")))
    }
    fn opt(&mut self) -> Result<Option<f64>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.f64()?)),
            f => Err(Error::Format(format!("bad option flag {f}"))),
        }
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.0.extend_from_slice(&ck.config_digest);
    w.u64(ck.epoch as u64);
    w.0.extend_from_slice(&ck.rng.seed);
    w.u64(ck.rng.stream);
    w.0.extend_from_slice(&ck.rng.word_pos.to_le_bytes());
    w.len(ck.classes.len())?;
    for &c in &ck.classes {
        w.len(c)?;
    }
    w.len(ck.stores.len())?;
    for s in &ck.stores {
        w.str(s.name())?;
        w.u64(s.step());
        w.len(s.len())?;
        for (name, p) in s.iter_params() {
            w.str(name)?;
            w.tensor(&p.value)?;
            w.tensor(&p.m)?;
            w.tensor(&p.v)?;
        }
    }
    w.len(ck.log.len())?;
    for m in &ck.log {
        w.u64(m.epoch as u64);
        for v in [
            m.lr_embedder,
            m.lr_other,
            m.critic_loss,
            m.wgan,
            m.penalty,
            m.gen_adv,
            m.cls,
            m.cluster,
            m.gen_total,
        ] {
            w.f64(v);
        }
        w.opt(m.val_top1_seen);
        w.opt(m.val_top1_unseen);
        w.opt(m.val_auc_top1);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    Ok(w.0)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    if buf.len() < 8 + 32 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a CGCK checkpoint".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let (body, trailer) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let config_digest = r.array()?;
    let epoch = r.u64()? as usize;
    let rng = RngState {
        seed: r.array()?,
        stream: r.u64()?,
        word_pos: u128::from_le_bytes(r.array()?),
    };
    let classes = (0..r.len()?).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
    let mut stores = Vec::new();
    for _ in 0..r.len()? {
        let name = r.str()?;
        let step = r.u64()?;
        let mut params = BTreeMap::new();
        for _ in 0..r.len()? {
            let key = r.str()?;
            let p = Param {
                value: r.tensor()?,
                m: r.tensor()?,
                v: r.tensor()?,
            };
            if params.insert(key.clone(), p).is_some() {
                return Err(Error::Format(format!("duplicate parameter {name}.{key}")));
            }
        }
        stores.push(ParamStore::from_parts(name, step, params)?);
    }
    let mut log = Vec::new();
    for _ in 0..r.len()? {
        let epoch = r.u64()? as usize;
        let mut v = [0.0; 9];
        for x in &mut v {
            *x = r.f64()?;
        }
        log.push(EpochMetrics {
            epoch,
            lr_embedder: v[0],
            lr_other: v[1],
            critic_loss: v[2],
            wgan: v[3],
            penalty: v[4],
            gen_adv: v[5],
            cls: v[6],
            cluster: v[7],
            gen_total: v[8],
            val_top1_seen: r.opt()?,
            val_top1_unseen: r.opt()?,
            val_auc_top1: r.opt()?,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(Checkpoint {
        epoch,
        config_digest,
        rng,
        classes,
        stores,
        log,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ck)?).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a checkpoint without checking which configuration produced it.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_checkpoint(&buf)
}

/// Reads a checkpoint and rejects it unless it was written under `config`.
pub fn load_checkpoint(path: impl AsRef<Path>, config: &TrainConfig) -> Result<Checkpoint> {
    let ck = read_checkpoint(path)?;
    ck.verify_config(config)?;
    Ok(ck)
}
