//! Model checkpoint.
//!
//! ```text
//! magic       8 bytes   "CHRTMDL\0"
//! version     u32       1
//! layers      u32       number of widths
//! widths      u64 x layers
//! momentum    f64
//! eps         f64
//! steps       u64
//! mode        u8        0 = train, 1 = eval
//! meta_len    u64, then "key=value\n" lines
//! payload     f32, per FC layer W (row-major) then b; per BN layer gamma, beta, running mean, running var
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::mlp::{Mlp, Mode};
use crate::container::FormatError;
use crate::scalar::Scalar;

pub const MAGIC: [u8; 8] = *b"CHRTMDL\0";
pub const VERSION: u32 = 1;

impl<T: Scalar> Mlp<T> {
    pub fn to_checkpoint_bytes(&self, meta: &BTreeMap<String, String>) -> Result<Vec<u8>, FormatError> {
        let widths = self.widths();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in &widths {
            out.extend_from_slice(&(*w as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.momentum().to_le_bytes());
        let eps = self.norms.first().map_or(super::batchnorm::BN_EPSILON, |n| n.eps.wide());
        out.extend_from_slice(&eps.to_le_bytes());
        out.extend_from_slice(&self.steps.to_le_bytes());
        out.push(match self.mode {
            Mode::Train => 0,
            Mode::Eval => 1,
        });
        let mut text = String::new();
        for (k, v) in meta {
            if k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(FormatError::Corrupt(format!("metadata entry `{k}` is not a single key=value line")));
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let mut push = |xs: &mut dyn Iterator<Item = T>| {
            for x in xs {
                out.extend_from_slice(&(x.wide() as f32).to_le_bytes());
            }
        };
        for d in &self.dense {
            push(&mut d.weight.iter().copied());
            push(&mut d.bias.iter().copied());
        }
        for n in &self.norms {
            push(&mut n.gamma.iter().copied());
            push(&mut n.beta.iter().copied());
            push(&mut n.running_mean.iter().copied());
            push(&mut n.running_var.iter().copied());
        }
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, BTreeMap<String, String>), FormatError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], FormatError> {
            if bytes.len() - pos < n {
                return Err(FormatError::Corrupt(format!("checkpoint ends at byte {}", bytes.len())));
            }
            pos += n;
            Ok(&bytes[pos - n..pos])
        };
        if take(8).map_err(|_| FormatError::BadMagic)? != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let layers = u32_at(take(4)?) as usize;
        if !(2..=64).contains(&layers) {
            return Err(FormatError::Corrupt(format!("implausible layer count {layers}")));
        }
        let widths = (0..layers).map(|_| take(8).map(|b| u64_at(b) as usize)).collect::<Result<Vec<_>, _>>()?;
        let momentum = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let eps = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let steps = u64_at(take(8)?);
        let mode = match take(1)?[0] {
            0 => Mode::Train,
            1 => Mode::Eval,
            other => return Err(FormatError::Corrupt(format!("unknown mode byte {other}"))),
        };
        let meta_len = u64_at(take(8)?) as usize;
        let text = std::str::from_utf8(take(meta_len)?).map_err(|_| FormatError::Corrupt("metadata is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| FormatError::Corrupt(format!("metadata line without `=`: {line}")))?;
            meta.insert(k.to_string(), v.to_string());
        }

        let mut model = Mlp::<T>::zeros(&widths, momentum).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let expected = (model.param_count() + model.norms.iter().map(|n| 2 * n.width()).sum::<usize>()) * 4;
        let rest = bytes.len() - pos;
        if rest != expected {
            return Err(FormatError::Corrupt(format!("payload has {rest} bytes, {expected} expected")));
        }
        let mut floats = bytes[pos..].chunks_exact(4).map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64));
        let mut fill = |dst: &mut dyn Iterator<Item = &mut T>| {
            for d in dst {
                *d = floats.next().expect("length checked");
            }
        };
        for d in model.dense.iter_mut() {
            fill(&mut d.weight.iter_mut());
            fill(&mut d.bias.iter_mut());
        }
        for n in model.norms.iter_mut() {
            fill(&mut n.gamma.iter_mut());
            fill(&mut n.beta.iter_mut());
            fill(&mut n.running_mean.iter_mut());
            fill(&mut n.running_var.iter_mut());
            n.eps = T::lit(eps);
        }
        model.steps = steps;
        model.mode = mode;
        Ok((model, meta))
    }

    pub fn write_checkpoint(&self, path: impl AsRef<Path>, meta: &BTreeMap<String, String>) -> Result<(), FormatError> {
        fs::write(path, self.to_checkpoint_bytes(meta)?)?;
        Ok(())
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(Self, BTreeMap<String, String>), FormatError> {
        Self::from_checkpoint_bytes(&fs::read(path)?)
    }
}
