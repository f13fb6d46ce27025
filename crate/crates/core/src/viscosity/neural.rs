//! Trainable viscosity: one-hot position encoding, a one-block convolutional
//! ResNet with a softplus head, and a jump/size scaling of the output that
//! makes the field resolution-independent and exactly zero on jump-free cells.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{Pad, Tape, Tensor};
use crate::equations::EquationSpec;
use crate::error::{Error, Result};
use crate::mesh::{Boundary, DgMesh};
use crate::rng::Rng;

use super::Viscosity;

const MAGIC: &[u8; 7] = b"VISCNN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Conservative variables fed to the network.
    pub n_vars: usize,
    /// Quadrature points per cell (one-hot position channels).
    pub p: usize,
    pub width: usize,
    pub kernel: usize,
    /// Number of residual blocks.
    pub depth: usize,
}

impl NetConfig {
    pub fn new(n_vars: usize, p: usize) -> NetConfig {
        NetConfig { n_vars, p, width: 16, kernel: 3, depth: 1 }
    }

    pub fn in_channels(&self) -> usize {
        self.n_vars + self.p
    }

    pub fn param_count(&self) -> usize {
        let (w, k) = (self.width, self.kernel);
        let stem = w * self.in_channels() * k + w;
        let block = 2 * (w * w * k + w);
        let head = w * k + 1;
        stem + self.depth * block + head
    }
}

/// Named parameter tensors in a fixed order (the training and checkpoint
/// order).
#[derive(Debug, Clone)]
pub struct NetParams {
    tensors: Vec<(String, Tensor)>,
}

impl NetParams {
    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn set_data(&mut self, idx: usize, data: Vec<f64>) {
        let (_, t) = &mut self.tensors[idx];
        *t = Tensor::from_vec(t.shape().to_vec(), data);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct NeuralViscosity {
    pub config: NetConfig,
    pub params: NetParams,
}

impl NeuralViscosity {
    /// Fresh network: He-style uniform fan-in init for stem and blocks, and
    /// a zero kernel with bias −3 for the head, so the initial output is the
    /// constant softplus(−3) ≈ 0.0486 — a small stabilizing viscosity.
    pub fn init(config: NetConfig, seed: u64) -> NeuralViscosity {
        let mut rng = Rng::new(seed);
        let (w, k) = (config.width, config.kernel);
        let mut tensors = Vec::new();
        let conv = |name: &str, c_out: usize, c_in: usize, rng: &mut Rng, zero: bool, bias: f64| {
            let limit = (6.0 / (c_in * k) as f64).sqrt();
            let kernel: Vec<f64> = (0..c_out * c_in * k)
                .map(|_| if zero { 0.0 } else { rng.uniform(-limit, limit) })
                .collect();
            ((format!("{name}.weight"), Tensor::from_vec(vec![c_out, c_in, k], kernel)),
             (format!("{name}.bias"), Tensor::from_vec(vec![c_out], vec![bias; c_out])))
        };
        let (sw, sb) = conv("stem", w, config.in_channels(), &mut rng, false, 0.0);
        tensors.push(sw);
        tensors.push(sb);
        for b in 0..config.depth {
            let (c1w, c1b) = conv(&format!("block{b}.conv1"), w, w, &mut rng, false, 0.0);
            let (c2w, c2b) = conv(&format!("block{b}.conv2"), w, w, &mut rng, false, 0.0);
            tensors.push(c1w);
            tensors.push(c1b);
            tensors.push(c2w);
            tensors.push(c2b);
        }
        let (hw, hb) = conv("head", 1, w, &mut rng, true, -3.0);
        tensors.push(hw);
        tensors.push(hb);
        NeuralViscosity { config, params: NetParams { tensors } }
    }

    /// Re-register every parameter as a trainable leaf on `tape`, in order.
    pub fn bind(&self, tape: &Tape) -> NeuralViscosity {
        let tensors = self
            .params
            .tensors
            .iter()
            .map(|(n, t)| (n.clone(), tape.param(t)))
            .collect();
        NeuralViscosity { config: self.config, params: NetParams { tensors } }
    }

    fn pad_for(boundary: &Boundary) -> Pad {
        if boundary.is_periodic() {
            Pad::Circular
        } else {
            Pad::Replicate
        }
    }

    /// Channel-concatenation of the nodal values (cell-major) and the p
    /// one-hot position channels repeating with period p.
    pub fn encode(&self, tape: &Tape, u: &Tensor) -> Result<Tensor> {
        let shape = u.shape();
        if shape.len() != 3 || shape[0] != self.config.n_vars || shape[2] != self.config.p {
            return Err(Error::Shape(format!(
                "encode expects [s={}, n_x, p={}], got {:?}",
                self.config.n_vars, self.config.p, shape
            )));
        }
        let (s, n_x, p) = (shape[0], shape[1], shape[2]);
        let len = n_x * p;
        let values = tape.reshape(u, vec![s, len])?;
        let mut onehot = vec![0.0; p * len];
        for col in 0..len {
            onehot[(col % p) * len + col] = 1.0;
        }
        let positions = Tensor::from_vec(vec![p, len], onehot);
        tape.concat(0, &[&values, &positions])
    }

    /// Raw positive output of the network: stem → block(s) → softplus head.
    pub fn forward(&self, tape: &Tape, encoded: &Tensor, pad: Pad) -> Result<Tensor> {
        let p = &self.params;
        let get = |name: &str| -> Result<&Tensor> {
            p.get(name).ok_or_else(|| Error::Corrupt(format!("missing parameter {name}")))
        };
        let mut x = tape.relu(&tape.conv1d(encoded, get("stem.weight")?, get("stem.bias")?, pad)?)?;
        for b in 0..self.config.depth {
            let y = tape.relu(&tape.conv1d(
                &x,
                get(&format!("block{b}.conv1.weight"))?,
                get(&format!("block{b}.conv1.bias"))?,
                pad,
            )?)?;
            let y = tape.conv1d(
                &y,
                get(&format!("block{b}.conv2.weight"))?,
                get(&format!("block{b}.conv2.bias"))?,
                pad,
            )?;
            x = tape.relu(&tape.add(&x, &y)?)?;
        }
        let out = tape.conv1d(&x, get("head.weight")?, get("head.bias")?, pad)?;
        let out = tape.softplus(&out)?;
        let len = out.len();
        tape.reshape(&out, vec![len])
    }

    /// Per-cell scaling factor s = min(Δx, max(|[[U]]_L|, |[[U]]_R|)),
    /// with the jump maximized over variables for systems. Shape [n_x].
    pub fn jump_scale(&self, tape: &Tape, mesh: &DgMesh, u: &Tensor) -> Result<Tensor> {
        let shape = u.shape();
        let (s, n_x, p) = (shape[0], shape[1], shape[2]);
        let left = tape.reshape(&tape.slice(u, 2, 0, 1)?, vec![s, n_x])?;
        let right = tape.reshape(&tape.slice(u, 2, p - 1, 1)?, vec![s, n_x])?;
        let (jump_left, jump_right) = match &mesh.boundary {
            Boundary::Periodic => {
                let right_prev = tape.concat(
                    1,
                    &[&tape.slice(&right, 1, n_x - 1, 1)?, &tape.slice(&right, 1, 0, n_x - 1)?],
                )?;
                let left_next = tape.concat(
                    1,
                    &[&tape.slice(&left, 1, 1, n_x - 1)?, &tape.slice(&left, 1, 0, 1)?],
                )?;
                (tape.sub(&left, &right_prev)?, tape.sub(&left_next, &right)?)
            }
            Boundary::Dirichlet { left: gl, right: gr } => {
                let ghost_l = Tensor::from_vec(vec![s, 1], gl.clone());
                let ghost_r = Tensor::from_vec(vec![s, 1], gr.clone());
                let right_prev =
                    tape.concat(1, &[&ghost_l, &tape.slice(&right, 1, 0, n_x - 1)?])?;
                let left_next =
                    tape.concat(1, &[&tape.slice(&left, 1, 1, n_x - 1)?, &ghost_r])?;
                (tape.sub(&left, &right_prev)?, tape.sub(&left_next, &right)?)
            }
        };
        let mut jump = tape.max(&tape.abs(&jump_left)?, &tape.abs(&jump_right)?)?;
        // max over variables, one slice at a time (s ≤ 3)
        let mut folded = tape.slice(&jump, 0, 0, 1)?;
        for v in 1..s {
            folded = tape.max(&folded, &tape.slice(&jump, 0, v, 1)?)?;
        }
        jump = tape.reshape(&folded, vec![n_x])?;
        let dx = Tensor::filled(vec![n_x], mesh.dx);
        tape.min(&dx, &jump)
    }

    /// μ = s · raw, with s constant across each cell. Output [n_x, p].
    pub fn scale_output(&self, tape: &Tape, mesh: &DgMesh, u: &Tensor, raw: &Tensor) -> Result<Tensor> {
        let (n_x, p) = (mesh.n_x, mesh.p);
        if raw.len() != n_x * p {
            return Err(Error::Shape(format!(
                "raw output length {} does not match {} nodes",
                raw.len(),
                n_x * p
            )));
        }
        let scale = self.jump_scale(tape, mesh, u)?;
        let ones = Tensor::filled(vec![1, p], 1.0);
        let tiled = tape.matmul_last(&tape.reshape(&scale, vec![n_x, 1])?, &ones)?;
        let raw_cells = tape.reshape(raw, vec![n_x, p])?;
        tape.mul(&tiled, &raw_cells)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        for v in [
            self.config.n_vars as u32,
            self.config.p as u32,
            self.config.width as u32,
            self.config.kernel as u32,
            self.config.depth as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for (name, t) in self.params.tensors() {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &e in t.shape() {
                buf.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NeuralViscosity> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = 0usize;
        let take = |cur: &mut usize, n: usize| -> Result<&[u8]> {
            if *cur + n > bytes.len() {
                return Err(Error::Corrupt("checkpoint truncated".into()));
            }
            let s = &bytes[*cur..*cur + n];
            *cur += n;
            Ok(s)
        };
        if take(&mut cur, 7)? != MAGIC {
            return Err(Error::Corrupt("bad magic: not a viscosity checkpoint".into()));
        }
        let read_u32 = |cur: &mut usize| -> Result<u32> {
            Ok(u32::from_le_bytes(take(cur, 4)?.try_into().unwrap()))
        };
        let config = NetConfig {
            n_vars: read_u32(&mut cur)? as usize,
            p: read_u32(&mut cur)? as usize,
            width: read_u32(&mut cur)? as usize,
            kernel: read_u32(&mut cur)? as usize,
            depth: read_u32(&mut cur)? as usize,
        };
        let mut tensors = Vec::new();
        while cur < bytes.len() {
            let name_len = read_u32(&mut cur)? as usize;
            let name = String::from_utf8(take(&mut cur, name_len)?.to_vec())
                .map_err(|_| Error::Corrupt("parameter name is not UTF-8".into()))?;
            let rank = read_u32(&mut cur)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut cur)? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = take(&mut cur, n * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::from_vec(shape, data)));
        }
        let net = NeuralViscosity { config, params: NetParams { tensors } };
        net.validate_shapes()?;
        Ok(net)
    }

    /// Shapes embedded in a checkpoint must agree with its config header.
    fn validate_shapes(&self) -> Result<()> {
        let reference = NeuralViscosity::init(self.config, 0);
        if reference.params.len() != self.params.len() {
            return Err(Error::Corrupt(format!(
                "checkpoint has {} tensors, config implies {}",
                self.params.len(),
                reference.params.len()
            )));
        }
        for ((name, t), (ref_name, ref_t)) in
            self.params.tensors().iter().zip(reference.params.tensors())
        {
            if name != ref_name || t.shape() != ref_t.shape() {
                return Err(Error::Corrupt(format!(
                    "parameter {name} has shape {:?}, config implies {} {:?}",
                    t.shape(),
                    ref_name,
                    ref_t.shape()
                )));
            }
        }
        Ok(())
    }
}

impl Viscosity for NeuralViscosity {
    fn mu(&self, tape: &Tape, mesh: &DgMesh, eq: &EquationSpec, u: &Tensor) -> Result<Tensor> {
        if eq.n_vars() != self.config.n_vars || mesh.p != self.config.p {
            return Err(Error::Config(format!(
                "network built for s={}, p={} used with s={}, p={}",
                self.config.n_vars,
                self.config.p,
                eq.n_vars(),
                mesh.p
            )));
        }
        let encoded = self.encode(tape, u)?;
        let raw = self.forward(tape, &encoded, Self::pad_for(&mesh.boundary))?;
        self.scale_output(tape, mesh, u, &raw)
    }
}
