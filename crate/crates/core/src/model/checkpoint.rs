//! Checkpoint files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "PSN1"
//! u32 tensor count
//! per tensor:   u32 name length, UTF-8 name, u32 rows, u32 cols, rows·cols f64 row-major
//! u32 optimizer count (0 when saved without optimizer state)
//! per optimizer: u32 label length, UTF-8 label, u64 step, f64 beta1, f64 beta2, f64 epsilon,
//!                u32 k, then k first-moment tensors and k second-moment tensors,
//!                each as u32 rows, u32 cols, values
//! ```
//!
//! Tensor names are the parameter names of the model, batch-norm statistics
//! as `<layer>.bn.running_mean` and `<layer>.bn.running_var` (1×d), and the
//! discriminator parameters under `lmir.` when they were saved. Optimizer
//! moments follow the tensor order of the store they belong to: label `model`
//! for the classifier, `lmir` for the discriminators.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::classifier::Classifier;
use super::objective::LmirHead;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Matrix, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PSN1";

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerRecord {
    pub label: String,
    pub state: AdamState,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Matrix)>,
    pub optimizers: Vec<OptimizerRecord>,
}

fn store_tensors(store: &ParamStore, out: &mut Vec<(String, Matrix)>) {
    out.extend(store.iter().map(|(n, m)| (n.to_string(), m.clone())));
}

impl Checkpoint {
    /// Parameters and batch-norm statistics of `model`, plus whatever else is given.
    pub fn capture(model: &Classifier, head: Option<&LmirHead>, adam: Option<&AdamState>, head_adam: Option<&AdamState>) -> Self {
        let mut tensors = Vec::new();
        let p = model.params();
        store_tensors(&p.store, &mut tensors);
        for slot in 0..p.bn.len() {
            let s = p.bn.get(slot);
            let d = s.dim();
            tensors.push((format!("{}.running_mean", p.bn.name(slot)), Matrix::from_vec(d, 1, s.running_mean).expect("sized").transpose()));
            tensors.push((format!("{}.running_var", p.bn.name(slot)), Matrix::from_vec(d, 1, s.running_var).expect("sized").transpose()));
        }
        if let Some(h) = head {
            store_tensors(&h.store, &mut tensors);
        }
        let mut optimizers = Vec::new();
        if let Some(a) = adam {
            optimizers.push(OptimizerRecord {
                label: "model".into(),
                state: a.clone(),
            });
        }
        if let Some(a) = head_adam {
            optimizers.push(OptimizerRecord {
                label: "lmir".into(),
                state: a.clone(),
            });
        }
        Checkpoint { tensors, optimizers }
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Copies every parameter and batch-norm statistic of `model` from the file.
    /// A missing tensor or a shape mismatch is a format error.
    pub fn restore(&self, model: &mut Classifier) -> Result<()> {
        let missing = |n: &str| Error::Format(format!("checkpoint has no tensor `{n}`"));
        let names: Vec<String> = model.params().store.iter().map(|(n, _)| n.to_string()).collect();
        for n in &names {
            let m = self.tensor(n).ok_or_else(|| missing(n))?;
            let store = &mut model.params_mut().store;
            let id = store.find(n).expect("name taken from the store");
            if store.get(id).shape() != m.shape() {
                return Err(Error::Format(format!(
                    "tensor `{n}` is {:?} in the checkpoint but {:?} in the model",
                    m.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = m.clone();
        }
        let bn = &model.params().bn;
        for slot in 0..bn.len() {
            let mut s = bn.get(slot);
            let name = bn.name(slot);
            for (suffix, target) in [("running_mean", &mut s.running_mean), ("running_var", &mut s.running_var)] {
                let key = format!("{name}.{suffix}");
                let m = self.tensor(&key).ok_or_else(|| missing(&key))?;
                if m.shape() != (1, target.len()) {
                    return Err(Error::Format(format!("tensor `{key}` has shape {:?}", m.shape())));
                }
                target.copy_from_slice(m.data());
            }
            bn.set(slot, s);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, self.tensors.len());
        for (name, m) in &self.tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_matrix(&mut out, m);
        }
        put_u32(&mut out, self.optimizers.len());
        for o in &self.optimizers {
            put_u32(&mut out, o.label.len());
            out.extend_from_slice(o.label.as_bytes());
            let s = &o.state;
            out.extend_from_slice(&s.step.to_le_bytes());
            for v in [s.beta1, s.beta2, s.epsilon] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            put_u32(&mut out, s.first_moment.len());
            for m in s.first_moment.iter().chain(&s.second_moment) {
                put_matrix(&mut out, m);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing PSN1 header".into()));
        }
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            tensors.push((name, r.matrix()?));
        }
        let count = r.u32()?;
        let mut optimizers = Vec::new();
        for _ in 0..count {
            let label = r.string()?;
            let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            let (beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?);
            let k = r.u32()?;
            let first_moment = (0..k).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
            let second_moment = (0..k).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
            optimizers.push(OptimizerRecord {
                label,
                state: AdamState {
                    first_moment,
                    second_moment,
                    step,
                    beta1,
                    beta2,
                    epsilon,
                },
            });
        }
        if r.at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.at)));
        }
        Ok(Checkpoint { tensors, optimizers })
    }

    pub fn optimizer(&self, label: &str) -> Option<&AdamState> {
        self.optimizers.iter().find(|o| o.label == label).map(|o| &o.state)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    put_u32(out, m.rows());
    put_u32(out, m.cols());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let (rows, cols) = (self.u32()?, self.u32()?);
        let len = rows.checked_mul(cols).and_then(|n| n.checked_mul(8));
        let raw = self.take(len.ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, w: &mut impl Write) -> Result<()> {
    w.write_all(&ckpt.to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
