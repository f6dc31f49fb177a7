use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::records::{self, Record, RecordError};
use crate::rng::{substream, Stream};
use crate::tensor::{BnState, ConvSpec, Mode, Tape, Tensor, TensorError, Var};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;
const ENCODER_WIDTHS: [usize; 4] = [128, 128, 256, 256];
const DECODER_WIDTHS: [usize; 3] = [256, 128, 128];
const HIDDEN: usize = 128;

/// Shortest series the four stride-2 stages can reduce to length one.
pub const MIN_SEQ_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence length {0} is below {MIN_SEQ_LEN}: four stride-2 stages need at least {MIN_SEQ_LEN} steps; pad the series")]
    TooShort(usize),
    #[error("need at least 2 classes, got {0}")]
    Classes(usize),
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("dropout probability {0} outside [0, 1)")]
    Dropout(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub seq_len: usize,
    pub classes: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(channels: usize, seq_len: usize, classes: usize) -> Self {
        Self {
            channels,
            seq_len,
            classes,
            embed_dim: 32,
            dropout: 0.2,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.channels == 0 {
            return Err(ModelError::Zero("channels"));
        }
        if self.embed_dim == 0 {
            return Err(ModelError::Zero("embed_dim"));
        }
        if self.seq_len < MIN_SEQ_LEN {
            return Err(ModelError::TooShort(self.seq_len));
        }
        if self.classes < 2 {
            return Err(ModelError::Classes(self.classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Dropout(self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
    state: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    affine: Affine,
    norm: Norm,
}

/// Outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `[B, d]`
    pub embedding: Var,
    /// `[B, k]`, pre-softmax.
    pub logits: Var,
    /// `[B, C, L]`, present when decoding was requested.
    pub reconstruction: Option<Var>,
    /// `[d, k]`
    pub centers: Var,
}

/// Encoder, decoder, classifier and cluster centers sharing one embedding.
#[derive(Debug, Clone)]
pub struct SreaModel {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor<f32>>,
    bn: Vec<BnState<f32>>,
    encoder: [Block; 4],
    embedding: Affine,
    upsample: Affine,
    decoder: [Block; 3],
    decoder_out: Affine,
    hidden: Block,
    output: Affine,
    centers: usize,
    /// Series length after each encoder stage, input first.
    lengths: [usize; 5],
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<f32> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect();
    Tensor::new(shape, data).expect("shape")
}

impl SreaModel {
    /// Builds the network with Kaiming-uniform weights at gain `sqrt(1/3)`
    /// (bound `1/sqrt(fan_in)`),
    /// zero biases and unit batch-norm scales.
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let mut m = Self {
            config,
            names: Vec::new(),
            params: Vec::new(),
            bn: Vec::new(),
            encoder: [Block { affine: Affine { w: 0, b: 0 }, norm: Norm { gamma: 0, beta: 0, state: 0 } }; 4],
            embedding: Affine { w: 0, b: 0 },
            upsample: Affine { w: 0, b: 0 },
            decoder: [Block { affine: Affine { w: 0, b: 0 }, norm: Norm { gamma: 0, beta: 0, state: 0 } }; 3],
            decoder_out: Affine { w: 0, b: 0 },
            hidden: Block { affine: Affine { w: 0, b: 0 }, norm: Norm { gamma: 0, beta: 0, state: 0 } },
            output: Affine { w: 0, b: 0 },
            centers: 0,
            lengths: [0; 5],
        };
        m.lengths[0] = config.seq_len;
        for i in 1..5 {
            m.lengths[i] = m.lengths[i - 1] / 2;
        }

        let mut c_in = config.channels;
        for (i, &width) in ENCODER_WIDTHS.iter().enumerate() {
            let w_shape = [width, c_in, KERNEL];
            m.encoder[i] = m.block(&format!("encoder.{i}"), &w_shape, width, c_in * KERNEL, rng);
            c_in = width;
        }
        let d = config.embed_dim;
        m.embedding = m.affine("embedding", &[d, c_in], d, c_in, rng);

        let l16 = m.lengths[4];
        m.upsample = m.affine("decoder.upsample", &[d * l16, d], d * l16, d, rng);
        let mut c_in = d;
        for (i, &width) in DECODER_WIDTHS.iter().enumerate() {
            // Transposed kernels are stored [C_in, C_out, K]; fan-in follows
            // the framework convention of dim 1 times kernel size.
            m.decoder[i] = m.block(&format!("decoder.{i}"), &[c_in, width, KERNEL], width, width * KERNEL, rng);
            c_in = width;
        }
        let c = config.channels;
        m.decoder_out = m.affine("decoder.3", &[c_in, c, KERNEL], c, c * KERNEL, rng);

        m.hidden = m.block("classifier.hidden", &[HIDDEN, d], HIDDEN, d, rng);
        m.output = m.affine("classifier.output", &[config.classes, HIDDEN], config.classes, HIDDEN, rng);

        m.centers = m.add("centers", uniform(&[d, config.classes], 0.1, rng));
        Ok(m)
    }

    fn add(&mut self, name: &str, t: Tensor<f32>) -> usize {
        self.names.push(name.to_string());
        self.params.push(t);
        self.params.len() - 1
    }

    fn affine(&mut self, name: &str, w_shape: &[usize], out: usize, fan_in: usize, rng: &mut impl Rng) -> Affine {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Affine {
            w: self.add(&format!("{name}.weight"), uniform(w_shape, bound, rng)),
            b: self.add(&format!("{name}.bias"), Tensor::zeros(&[out])),
        }
    }

    fn block(&mut self, name: &str, w_shape: &[usize], out: usize, fan_in: usize, rng: &mut impl Rng) -> Block {
        let affine = self.affine(name, w_shape, out, fan_in, rng);
        let gamma = self.add(&format!("{name}.bn.gamma"), Tensor::full(&[out], 1.0));
        let beta = self.add(&format!("{name}.bn.beta"), Tensor::zeros(&[out]));
        self.bn.push(BnState::new(out));
        Block {
            affine,
            norm: Norm {
                gamma,
                beta,
                state: self.bn.len() - 1,
            },
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Cluster centers `[d, k]`; column `j` belongs to class `j`.
    pub fn centers(&self) -> &Tensor<f32> {
        &self.params[self.centers]
    }

    pub fn set_centers(&mut self, centers: Tensor<f32>) -> Result<(), ModelError> {
        let expected = [self.config.embed_dim, self.config.classes];
        if centers.shape() != expected {
            return Err(TensorError::Incompatible {
                op: "set_centers",
                left: expected.to_vec(),
                right: centers.shape().to_vec(),
            }
            .into());
        }
        self.params[self.centers] = centers;
        Ok(())
    }

    /// Series lengths after each encoder stage, starting with the input.
    pub fn stage_lengths(&self) -> [usize; 5] {
        self.lengths
    }

    /// Places every parameter on `tape` as a trainable leaf, in
    /// [`SreaModel::params`] order.
    pub fn bind(&self, tape: &mut Tape<f32>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    fn run_block<R: Rng + ?Sized>(
        &mut self,
        tape: &mut Tape<f32>,
        p: &[Var],
        x: Var,
        block: Block,
        conv: Option<(bool, ConvSpec)>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let Block { affine, norm } = block;
        let y = match conv {
            Some((false, spec)) => tape.conv1d(x, p[affine.w], p[affine.b], spec)?,
            Some((true, spec)) => tape.conv_transpose1d(x, p[affine.w], p[affine.b], spec)?,
            None => tape.dense(x, p[affine.w], p[affine.b])?,
        };
        let s = tape.batch_norm(y, p[norm.gamma], p[norm.beta], &mut self.bn[norm.state], mode)?;
        let h = tape.relu(s);
        Ok(tape.dropout(h, self.config.dropout, rng, mode)?)
    }

    /// Embeds `x[B, C, L]` and classifies it; also reconstructs when
    /// `decode` is set.
    ///
    /// Train mode uses batch statistics, updates batch-norm running
    /// estimates and draws dropout masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        tape: &mut Tape<f32>,
        p: &[Var],
        x: Var,
        mode: Mode,
        rng: &mut R,
        decode: bool,
    ) -> Result<Forward, ModelError> {
        let shape = tape.shape(x).to_vec();
        let expected = [self.config.channels, self.config.seq_len];
        if shape.len() != 3 || shape[1..] != expected {
            return Err(TensorError::Incompatible {
                op: "model input",
                left: vec![0, expected[0], expected[1]],
                right: shape,
            }
            .into());
        }
        let down = ConvSpec::new(STRIDE, PADDING);
        let mut h = x;
        for block in self.encoder {
            h = self.run_block(tape, p, h, block, Some((false, down)), mode, rng)?;
        }
        let pooled = tape.global_avg_pool(h)?;
        let embedding = tape.dense(pooled, p[self.embedding.w], p[self.embedding.b])?;

        let hidden = self.run_block(tape, p, embedding, self.hidden, None, mode, rng)?;
        let logits = tape.dense(hidden, p[self.output.w], p[self.output.b])?;

        let reconstruction = if decode {
            let up = tape.dense(embedding, p[self.upsample.w], p[self.upsample.b])?;
            let batch = tape.shape(up)[0];
            let mut h = tape.reshape(up, &[batch, self.config.embed_dim, self.lengths[4]])?;
            for (i, block) in self.decoder.into_iter().enumerate() {
                let spec = down.with_output_padding(self.lengths[3 - i] - 2 * self.lengths[4 - i]);
                h = self.run_block(tape, p, h, block, Some((true, spec)), mode, rng)?;
            }
            let spec = down.with_output_padding(self.lengths[0] - 2 * self.lengths[1]);
            Some(tape.conv_transpose1d(h, p[self.decoder_out.w], p[self.decoder_out.b], spec)?)
        } else {
            None
        };
        Ok(Forward {
            embedding,
            logits,
            reconstruction,
            centers: p[self.centers],
        })
    }

    /// Eval-mode embeddings and class probabilities for `x[n, C, L]`,
    /// processed in chunks of `batch`.
    pub fn predict(&mut self, samples: &[f32], n: usize, batch: usize) -> Result<(Vec<f32>, Vec<f32>), ModelError> {
        let (c, l) = (self.config.channels, self.config.seq_len);
        let (d, k) = (self.config.embed_dim, self.config.classes);
        let mut emb = Vec::with_capacity(n * d);
        let mut probs = Vec::with_capacity(n * k);
        let mut no_rng = substream(0, Stream::Dropout);
        let mut start = 0;
        while start < n {
            let end = (start + batch.max(1)).min(n);
            let mut tape = Tape::new();
            let p: Vec<Var> = self.params.iter().map(|t| tape.constant(t.clone())).collect();
            let x = tape.constant(Tensor::new(&[end - start, c, l], samples[start * c * l..end * c * l].to_vec())?);
            let out = self.forward(&mut tape, &p, x, Mode::Eval, &mut no_rng, false)?;
            let pr = tape.softmax(out.logits)?;
            emb.extend_from_slice(tape.value(out.embedding).data());
            probs.extend_from_slice(tape.value(pr).data());
            start = end;
        }
        Ok((emb, probs))
    }

    fn config_record(&self) -> Record {
        let c = &self.config;
        Record::new(
            "config",
            &[5],
            vec![c.channels as f32, c.seq_len as f32, c.classes as f32, c.embed_dim as f32, c.dropout as f32],
        )
    }

    /// All parameters and batch-norm running statistics as records.
    pub fn to_records(&self) -> Vec<Record> {
        let mut out = vec![self.config_record()];
        for (name, t) in self.names.iter().zip(&self.params) {
            out.push(Record::new(name.clone(), t.shape(), t.data().to_vec()));
        }
        for (i, s) in self.bn.iter().enumerate() {
            out.push(Record::new(format!("bn.{i}.running_mean"), &[s.channels()], s.running_mean.clone()));
            out.push(Record::new(format!("bn.{i}.running_var"), &[s.channels()], s.running_var.clone()));
        }
        out
    }

    pub fn from_records(recs: &[Record]) -> Result<Self, ModelError> {
        let cfg = records::find(recs, "config")?;
        if cfg.data.len() != 5 {
            return Err(ModelError::Checkpoint("config record must hold 5 values".into()));
        }
        let config = ModelConfig {
            channels: cfg.data[0] as usize,
            seq_len: cfg.data[1] as usize,
            classes: cfg.data[2] as usize,
            embed_dim: cfg.data[3] as usize,
            dropout: cfg.data[4] as f64,
        };
        let mut rng = substream(0, Stream::Init);
        let mut m = Self::new(config, &mut rng)?;
        for i in 0..m.params.len() {
            let r = records::find(recs, &m.names[i])?;
            if r.shape != m.params[i].shape() {
                return Err(ModelError::Checkpoint(format!(
                    "{} has shape {:?}, expected {:?}",
                    r.name,
                    r.shape,
                    m.params[i].shape()
                )));
            }
            m.params[i] = Tensor::new(&r.shape, r.data.clone())?;
        }
        for i in 0..m.bn.len() {
            let mean = records::find(recs, &format!("bn.{i}.running_mean"))?;
            let var = records::find(recs, &format!("bn.{i}.running_var"))?;
            let c = m.bn[i].channels();
            if mean.data.len() != c || var.data.len() != c {
                return Err(ModelError::Checkpoint(format!("bn.{i} statistics have the wrong length")));
            }
            m.bn[i].running_mean = mean.data.clone();
            m.bn[i].running_var = var.data.clone();
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path).map_err(RecordError::from)?);
        records::write_records(f, &self.to_records())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = std::io::BufReader::new(std::fs::File::open(path).map_err(RecordError::from)?);
        Self::from_records(&records::read_records(f)?)
    }
}
