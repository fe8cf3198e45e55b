//! Model definitions: MLP encoders, the two-branch fusion teacher and the
//! raw-only student, Glorot initialization, and bit-exact text checkpoints.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndcore::{concat_cols, GradTape, Matrix, Var};

pub const CKPT_HEADER: &str = "#privdistill-ckpt-v1";

/// Layer widths input -> hidden... -> output. Hidden layers get relu, the
/// final layer none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::Param(format!(
                "MLP spec needs at least one hidden layer, got widths {widths:?}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Param(format!("MLP widths must be positive, got {widths:?}")));
        }
        Ok(MlpSpec { widths })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// in x out
    pub w: Matrix,
    /// 1 x out
    pub b: Matrix,
}

impl Linear {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-s..s)).collect();
        Linear {
            w: Matrix::new(fan_in, fan_out, data).unwrap(),
            b: Matrix::zeros(1, fan_out),
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul(&self.w)?;
        for r in 0..y.rows() {
            for c in 0..y.cols() {
                let v = y.get(r, c) + self.b.get(0, c);
                y.set(r, c, v);
            }
        }
        Ok(y)
    }

    fn forward_tape(&self, tape: &mut GradTape, x: Var, params: &mut Vec<Var>) -> Result<Var> {
        let w = tape.leaf(self.w.clone());
        let b = tape.leaf(self.b.clone());
        params.push(w);
        params.push(b);
        let y = tape.matmul(x, w)?;
        tape.add_row_bias(y, b)
    }

    fn n_params(&self) -> usize {
        self.w.data().len() + self.b.data().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, deterministic per rng state.
    pub fn init(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear::glorot(w[0], w[1], rng))
            .collect();
        Mlp { spec, layers }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.spec.input_width() {
            return Err(Error::Shape(format!(
                "input width {} does not match encoder input {}",
                x.cols(),
                self.spec.input_width()
            )));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer
                .forward(&h)
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            if i < last {
                h = h.map(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn forward_tape(
        &self,
        tape: &mut GradTape,
        x: Var,
        params: &mut Vec<Var>,
    ) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer
                .forward_tape(tape, h, params)
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    fn n_params(&self) -> usize {
        self.layers.iter().map(Linear::n_params).sum()
    }
}

/// Two-branch teacher: raw encoder + privileged-feature encoder, fused by
/// concatenation into a linear head over both embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    pub raw_encoder: Mlp,
    pub priv_encoder: Mlp,
    pub fusion_head: Linear,
    pub k: usize,
    pub seed: u64,
}

impl TeacherModel {
    pub fn init(raw_spec: MlpSpec, priv_spec: MlpSpec, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Param(format!("class count must be >= 2, got {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw_encoder = Mlp::init(raw_spec, &mut rng);
        let priv_encoder = Mlp::init(priv_spec, &mut rng);
        let fused = raw_encoder.spec.output_width() + priv_encoder.spec.output_width();
        let fusion_head = Linear::glorot(fused, k, &mut rng);
        Ok(TeacherModel { raw_encoder, priv_encoder, fusion_head, k, seed })
    }

    /// Batched logits from raw + privileged feature matrices.
    pub fn forward_batch(&self, raw: &Matrix, privileged: &Matrix) -> Result<Matrix> {
        let e_r = self.raw_encoder.forward(raw)?;
        let e_p = self
            .priv_encoder
            .forward(privileged)
            .map_err(|e| Error::Shape(format!("privileged branch: {e}")))?;
        self.fusion_head.forward(&concat_cols(&e_r, &e_p)?)
    }

    pub fn forward(&self, raw: &[f64], privileged: &[f64]) -> Result<Vec<f64>> {
        let logits = self.forward_batch(
            &Matrix::row_vec(raw),
            &Matrix::row_vec(privileged),
        )?;
        Ok(logits.row(0).to_vec())
    }

    pub fn forward_tape(
        &self,
        tape: &mut GradTape,
        raw: Var,
        privileged: Var,
        params: &mut Vec<Var>,
    ) -> Result<Var> {
        let e_r = self.raw_encoder.forward_tape(tape, raw, params)?;
        let e_p = self.priv_encoder.forward_tape(tape, privileged, params)?;
        let fused = tape.concat_cols(e_r, e_p)?;
        self.fusion_head.forward_tape(tape, fused, params)
    }

    /// Parameter references in the exact order `forward_tape` registers them.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.raw_encoder.params_mut();
        out.extend(self.priv_encoder.params_mut());
        out.push(&mut self.fusion_head.w);
        out.push(&mut self.fusion_head.b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.raw_encoder.n_params() + self.priv_encoder.n_params() + self.fusion_head.n_params()
    }
}

/// Raw-features-only student. Privileged features are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub raw_encoder: Mlp,
    pub head: Linear,
    pub k: usize,
    pub seed: u64,
}

impl StudentModel {
    pub fn init(raw_spec: MlpSpec, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Param(format!("class count must be >= 2, got {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw_encoder = Mlp::init(raw_spec, &mut rng);
        let head = Linear::glorot(raw_encoder.spec.output_width(), k, &mut rng);
        Ok(StudentModel { raw_encoder, head, k, seed })
    }

    pub fn forward_batch(&self, raw: &Matrix) -> Result<Matrix> {
        self.head.forward(&self.raw_encoder.forward(raw)?)
    }

    pub fn forward(&self, raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&Matrix::row_vec(raw))?.row(0).to_vec())
    }

    pub fn forward_tape(
        &self,
        tape: &mut GradTape,
        raw: Var,
        params: &mut Vec<Var>,
    ) -> Result<Var> {
        let e = self.raw_encoder.forward_tape(tape, raw, params)?;
        self.head.forward_tape(tape, e, params)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.raw_encoder.params_mut();
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.raw_encoder.n_params() + self.head.n_params()
    }
}

/// Default desk-scale architecture: raw encoder [d_raw, 64, 32], privileged
/// encoder [d_priv, 32, 16], fusion head 48 -> K, student head 32 -> K.
pub fn default_raw_spec(d_raw: usize) -> MlpSpec {
    MlpSpec::new(vec![d_raw, 64, 32]).unwrap()
}

pub fn default_priv_spec(d_priv: usize) -> MlpSpec {
    MlpSpec::new(vec![d_priv, 32, 16]).unwrap()
}

// ---- checkpoint serialization ------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Teacher(TeacherModel),
    Student(StudentModel),
}

impl AnyModel {
    pub fn into_teacher(self) -> Result<TeacherModel> {
        match self {
            AnyModel::Teacher(t) => Ok(t),
            AnyModel::Student(_) => {
                Err(Error::Schema("checkpoint holds a student model, expected teacher".into()))
            }
        }
    }

    pub fn into_student(self) -> Result<StudentModel> {
        match self {
            AnyModel::Student(s) => Ok(s),
            AnyModel::Teacher(_) => {
                Err(Error::Schema("checkpoint holds a teacher model, expected student".into()))
            }
        }
    }
}

fn write_tensor(out: &mut String, name: &str, m: &Matrix) {
    write!(out, "tensor {name} {} {}", m.rows(), m.cols()).unwrap();
    for v in m.data() {
        write!(out, " {:016x}", v.to_bits()).unwrap();
    }
    out.push('\n');
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn mlp_tensors(out: &mut String, prefix: &str, mlp: &Mlp) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        write_tensor(out, &format!("{prefix}.{i}.w"), &layer.w);
        write_tensor(out, &format!("{prefix}.{i}.b"), &layer.b);
    }
}

fn widths_str(spec: &MlpSpec) -> String {
    spec.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

/// Serialize a model to the checkpoint text format. The trailing checksum
/// line covers every preceding byte; f64 values are stored as raw bit
/// patterns so the round-trip is exact.
pub fn serialize_model(model: &AnyModel) -> String {
    let mut out = String::new();
    match model {
        AnyModel::Teacher(t) => {
            out.push_str(&format!("{CKPT_HEADER} kind=teacher K={} seed={}\n", t.k, t.seed));
            out.push_str(&format!("spec raw_encoder {}\n", widths_str(&t.raw_encoder.spec)));
            out.push_str(&format!("spec priv_encoder {}\n", widths_str(&t.priv_encoder.spec)));
            mlp_tensors(&mut out, "raw_encoder", &t.raw_encoder);
            mlp_tensors(&mut out, "priv_encoder", &t.priv_encoder);
            write_tensor(&mut out, "fusion_head.w", &t.fusion_head.w);
            write_tensor(&mut out, "fusion_head.b", &t.fusion_head.b);
        }
        AnyModel::Student(s) => {
            out.push_str(&format!("{CKPT_HEADER} kind=student K={} seed={}\n", s.k, s.seed));
            out.push_str(&format!("spec raw_encoder {}\n", widths_str(&s.raw_encoder.spec)));
            mlp_tensors(&mut out, "raw_encoder", &s.raw_encoder);
            write_tensor(&mut out, "head.w", &s.head.w);
            write_tensor(&mut out, "head.b", &s.head.b);
        }
    }
    let sum = fnv1a(out.as_bytes());
    out.push_str(&format!("checksum {sum:016x}\n"));
    out
}

struct CkptReader {
    tensors: Vec<(String, Matrix)>,
    specs: Vec<(String, Vec<usize>)>,
}

fn parse_tensor(line: &str, lineno: usize) -> Result<(String, Matrix)> {
    let mut parts = line.split_whitespace();
    parts.next(); // "tensor"
    let parse_err = |msg: &str| Error::Parse { line: lineno, msg: msg.into() };
    let name = parts.next().ok_or_else(|| parse_err("missing tensor name"))?.to_string();
    let rows: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err("bad row count"))?;
    let cols: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err("bad col count"))?;
    let mut data = Vec::with_capacity(rows * cols);
    for tok in parts {
        let bits = u64::from_str_radix(tok, 16)
            .map_err(|_| parse_err(&format!("bad f64 bits '{tok}'")))?;
        data.push(f64::from_bits(bits));
    }
    Matrix::new(rows, cols, data).map(|m| (name, m)).map_err(|e| Error::Parse {
        line: lineno,
        msg: e.to_string(),
    })
}

fn take_mlp(reader: &CkptReader, prefix: &str) -> Result<Mlp> {
    let widths = reader
        .specs
        .iter()
        .find(|(n, _)| n == prefix)
        .map(|(_, w)| w.clone())
        .ok_or_else(|| Error::Schema(format!("missing spec for {prefix}")))?;
    let spec = MlpSpec::new(widths)?;
    let mut layers = Vec::new();
    for i in 0..spec.widths.len() - 1 {
        let take = |suffix: &str| -> Result<Matrix> {
            let name = format!("{prefix}.{i}.{suffix}");
            reader
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))
        };
        let (w, b) = (take("w")?, take("b")?);
        if w.rows() != spec.widths[i] || w.cols() != spec.widths[i + 1] {
            return Err(Error::Schema(format!(
                "tensor {prefix}.{i}.w is {}x{}, spec says {}x{}",
                w.rows(),
                w.cols(),
                spec.widths[i],
                spec.widths[i + 1]
            )));
        }
        layers.push(Linear { w, b });
    }
    Ok(Mlp { spec, layers })
}

fn take_tensor(reader: &CkptReader, name: &str) -> Result<Matrix> {
    reader
        .tensors
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, m)| m.clone())
        .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))
}

fn header_field(header: &str, key: &str) -> Result<String> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")).map(str::to_string))
        .ok_or_else(|| Error::Schema(format!("checkpoint header missing {key}")))
}

/// Parse a checkpoint produced by `serialize_model`, verifying the checksum.
pub fn deserialize_model(text: &str) -> Result<AnyModel> {
    let checksum_pos = text
        .rfind("checksum ")
        .ok_or_else(|| Error::Checksum("no checksum line (file truncated?)".into()))?;
    let body = &text[..checksum_pos];
    let stated = text[checksum_pos..]
        .trim()
        .strip_prefix("checksum ")
        .and_then(|v| u64::from_str_radix(v.trim(), 16).ok())
        .ok_or_else(|| Error::Checksum("malformed checksum line".into()))?;
    let actual = fnv1a(body.as_bytes());
    if stated != actual {
        return Err(Error::Checksum(format!("stated {stated:016x} != computed {actual:016x}")));
    }

    let mut lines = body.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty checkpoint".into()))?;
    if !header.starts_with(CKPT_HEADER) {
        return Err(Error::Schema(format!("unrecognized checkpoint header '{header}'")));
    }
    let kind = header_field(header, "kind")?;
    let k: usize = header_field(header, "K")?
        .parse()
        .map_err(|_| Error::Schema("bad K in header".into()))?;
    let seed: u64 = header_field(header, "seed")?
        .parse()
        .map_err(|_| Error::Schema("bad seed in header".into()))?;

    let mut reader = CkptReader { tensors: Vec::new(), specs: Vec::new() };
    for (i, line) in lines {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("spec ") {
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| Error::Parse { line: lineno, msg: "missing spec name".into() })?;
            let widths = parts
                .next()
                .ok_or_else(|| Error::Parse { line: lineno, msg: "missing spec widths".into() })?
                .split(',')
                .map(|v| {
                    v.parse::<usize>().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("bad width '{v}'"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            reader.specs.push((name.to_string(), widths));
        } else if line.starts_with("tensor ") {
            reader.tensors.push(parse_tensor(line, lineno)?);
        } else if !line.trim().is_empty() {
            return Err(Error::Parse { line: lineno, msg: format!("unrecognized line '{line}'") });
        }
    }

    match kind.as_str() {
        "teacher" => {
            let raw_encoder = take_mlp(&reader, "raw_encoder")?;
            let priv_encoder = take_mlp(&reader, "priv_encoder")?;
            let fusion_head = Linear {
                w: take_tensor(&reader, "fusion_head.w")?,
                b: take_tensor(&reader, "fusion_head.b")?,
            };
            let expected = raw_encoder.spec.output_width() + priv_encoder.spec.output_width();
            if fusion_head.w.rows() != expected {
                return Err(Error::Schema(format!(
                    "fusion head input {} != combined embedding width {expected}",
                    fusion_head.w.rows()
                )));
            }
            Ok(AnyModel::Teacher(TeacherModel { raw_encoder, priv_encoder, fusion_head, k, seed }))
        }
        "student" => {
            let raw_encoder = take_mlp(&reader, "raw_encoder")?;
            let head = Linear {
                w: take_tensor(&reader, "head.w")?,
                b: take_tensor(&reader, "head.b")?,
            };
            Ok(AnyModel::Student(StudentModel { raw_encoder, head, k, seed }))
        }
        other => Err(Error::Schema(format!("unknown checkpoint kind '{other}'"))),
    }
}
