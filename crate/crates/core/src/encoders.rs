//! Context encoders: map a context vector to the parameters of a sample-specific model.
//!
//! Three families are provided. `linear` is the classical varying-coefficient
//! map `βc + b`. `mlp` is a feed-forward network. `ngam` is a neural additive
//! model, `b + Σⱼ fⱼ(cⱼ)`, with one independent subnetwork per context feature
//! and therefore no interactions between context features.
//!
//! Any of them can feed an archetype head: the encoder then emits `K` logits,
//! and the output is the softmax-weighted combination of `K` learned archetype
//! rows. The softmax weights are returned alongside as subtype probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{activation, Activation, Matrix, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Linear,
    Mlp,
    Ngam,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            "ngam" => Ok(Self::Ngam),
            other => Err(Error::Config(format!("unknown encoder type `{other}`"))),
        }
    }
}

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

/// Architecture of a context encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub context_dim: usize,
    pub output_dim: usize,
    /// Hidden widths for `mlp`, and for each per-feature subnetwork of `ngam`.
    /// Ignored by `linear`.
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    /// Number of archetypes; 0 disables the archetype head.
    pub archetypes: usize,
}

impl EncoderSpec {
    pub fn linear(context_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: EncoderKind::Linear,
            context_dim,
            output_dim,
            hidden_layers: Vec::new(),
            activation: Activation::Relu,
            archetypes: 0,
        }
    }

    pub fn mlp(context_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: EncoderKind::Mlp,
            hidden_layers: DEFAULT_HIDDEN.to_vec(),
            ..Self::linear(context_dim, output_dim)
        }
    }

    pub fn ngam(context_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: EncoderKind::Ngam,
            hidden_layers: DEFAULT_HIDDEN.to_vec(),
            ..Self::linear(context_dim, output_dim)
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden_layers = hidden;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_archetypes(mut self, k: usize) -> Self {
        self.archetypes = k;
        self
    }

    /// Width of the encoder body's output: `K` logits with archetypes, else `output_dim`.
    pub fn raw_dim(&self) -> usize {
        if self.archetypes > 0 {
            self.archetypes
        } else {
            self.output_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_dim == 0 {
            return Err(Error::Config("encoder context_dim must be >= 1".into()));
        }
        if self.output_dim == 0 {
            return Err(Error::Config("encoder output_dim must be >= 1".into()));
        }
        if self.archetypes == 1 {
            return Err(Error::Config("archetype count must be 0 (disabled) or >= 2".into()));
        }
        if self.kind != EncoderKind::Linear && self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Seeded initialization: weights and biases uniform in `±1/√fan_in`,
    /// archetypes standard normal scaled by 0.1.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let raw = self.raw_dim();
        match self.kind {
            EncoderKind::Linear => {
                let m = self.context_dim;
                store.insert("linear.weight", uniform(&mut rng, m, raw, m));
                store.insert("linear.bias", uniform(&mut rng, 1, raw, m));
            }
            EncoderKind::Mlp => {
                let dims = self.layer_dims(self.context_dim, raw);
                for (i, w) in dims.windows(2).enumerate() {
                    store.insert(format!("mlp.{i}.weight"), uniform(&mut rng, w[0], w[1], w[0]));
                    store.insert(format!("mlp.{i}.bias"), uniform(&mut rng, 1, w[1], w[0]));
                }
            }
            EncoderKind::Ngam => {
                let dims = self.layer_dims(1, raw);
                let last = dims.len() - 2;
                for j in 0..self.context_dim {
                    for (i, w) in dims.windows(2).enumerate() {
                        store.insert(format!("ngam.{j}.{i}.weight"), uniform(&mut rng, w[0], w[1], w[0]));
                        if i < last {
                            store.insert(format!("ngam.{j}.{i}.bias"), uniform(&mut rng, 1, w[1], w[0]));
                        }
                    }
                }
                store.insert("ngam.bias", uniform(&mut rng, 1, raw, self.context_dim));
            }
        }
        if self.archetypes > 0 {
            let a = Matrix::from_fn(self.archetypes, self.output_dim, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z
            });
            store.insert("archetypes", a);
        }
        Ok(store)
    }

    fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.hidden_layers);
        dims.push(output);
        dims
    }

    /// Records the encoder on `tape` for an `n x m` context batch.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, context: Var) -> Result<EncoderOutput> {
        let (_, m) = tape.shape(context);
        if m != self.context_dim {
            return Err(Error::Shape {
                op: "encoder",
                left: format!("context with {m} columns"),
                right: format!("context_dim {}", self.context_dim),
            });
        }
        let raw = match self.kind {
            EncoderKind::Linear => {
                let w = tape.param(store, store.require("linear.weight")?);
                let b = tape.param(store, store.require("linear.bias")?);
                let h = tape.matmul(context, w)?;
                tape.add_row_bias(h, b)?
            }
            EncoderKind::Mlp => {
                let n_layers = self.hidden_layers.len() + 1;
                let mut h = context;
                for i in 0..n_layers {
                    let w = tape.param(store, store.require(&format!("mlp.{i}.weight"))?);
                    let b = tape.param(store, store.require(&format!("mlp.{i}.bias"))?);
                    let z = tape.matmul(h, w)?;
                    h = tape.add_row_bias(z, b)?;
                    if i + 1 < n_layers {
                        h = tape.activation(h, self.activation);
                    }
                }
                h
            }
            EncoderKind::Ngam => {
                let n_layers = self.hidden_layers.len() + 1;
                let mut total: Option<Var> = None;
                for j in 0..self.context_dim {
                    let mut h = tape.slice_cols(context, j, j + 1)?;
                    for i in 0..n_layers {
                        let w = tape.param(store, store.require(&format!("ngam.{j}.{i}.weight"))?);
                        h = tape.matmul(h, w)?;
                        if i + 1 < n_layers {
                            let b = tape.param(store, store.require(&format!("ngam.{j}.{i}.bias"))?);
                            h = tape.add_row_bias(h, b)?;
                            h = tape.activation(h, self.activation);
                        }
                    }
                    total = Some(match total {
                        None => h,
                        Some(t) => tape.add(t, h)?,
                    });
                }
                let b = tape.param(store, store.require("ngam.bias")?);
                let total = total.expect("context_dim >= 1");
                tape.add_row_bias(total, b)?
            }
        };
        if self.archetypes == 0 {
            return Ok(EncoderOutput {
                output: raw,
                weights: None,
            });
        }
        let a = tape.param(store, store.require("archetypes")?);
        if tape.shape(a) != (self.archetypes, self.output_dim) {
            return Err(Error::State(format!(
                "archetype dictionary has shape {:?}, expected {}x{}",
                tape.shape(a),
                self.archetypes,
                self.output_dim
            )));
        }
        let w = tape.activation(raw, Activation::SoftmaxRows);
        let output = tape.matmul(w, a)?;
        Ok(EncoderOutput {
            output,
            weights: Some(w),
        })
    }

    /// Evaluates the encoder on an `n x m` context matrix.
    pub fn encode(&self, store: &ParamStore, context: &Matrix) -> Result<EncodedBatch> {
        let mut tape = Tape::new();
        let c = tape.constant(context.clone());
        let out = self.forward(&mut tape, store, c)?;
        Ok(EncodedBatch {
            output: tape.value(out.output).clone(),
            weights: out.weights.map(|w| tape.value(w).clone()),
        })
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Tape handles produced by [`EncoderSpec::forward`].
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    /// `n x output_dim` sample parameters.
    pub output: Var,
    /// `n x K` archetype weights when the archetype head is enabled.
    pub weights: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct EncodedBatch {
    pub output: Matrix,
    pub weights: Option<Matrix>,
}

/// `K x d_out` archetype rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchetypeDictionary(Matrix);

impl ArchetypeDictionary {
    pub fn new(rows: Matrix) -> Result<Self> {
        if rows.rows() < 2 {
            return Err(Error::Config(format!(
                "archetype dictionary needs at least 2 rows, got {}",
                rows.rows()
            )));
        }
        Ok(Self(rows))
    }

    pub fn count(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// `β c + b`, with `β` stored `d_out x m`.
pub fn encode_linear(c: &[f64], beta: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    if beta.cols() != c.len() || beta.rows() != bias.len() {
        return Err(Error::Shape {
            op: "encode_linear",
            left: format!("beta {}x{}, bias {}", beta.rows(), beta.cols(), bias.len()),
            right: format!("context {}", c.len()),
        });
    }
    Ok((0..beta.rows())
        .map(|r| bias[r] + beta.row(r).iter().zip(c).map(|(w, x)| w * x).sum::<f64>())
        .collect())
}

fn encode_one(spec: &EncoderSpec, kind: EncoderKind, c: &[f64], store: &ParamStore) -> Result<Vec<f64>> {
    if spec.kind != kind {
        return Err(Error::Config(format!("expected a {kind:?} encoder, spec is {:?}", spec.kind)));
    }
    let batch = spec.encode(store, &Matrix::row_vector(c))?;
    Ok(batch.output.into_data())
}

pub fn encode_mlp(c: &[f64], store: &ParamStore, spec: &EncoderSpec) -> Result<Vec<f64>> {
    encode_one(spec, EncoderKind::Mlp, c, store)
}

pub fn encode_ngam(c: &[f64], store: &ParamStore, spec: &EncoderSpec) -> Result<Vec<f64>> {
    encode_one(spec, EncoderKind::Ngam, c, store)
}

/// Softmax-weighted combination of archetype rows. Returns `(wᵀA, w)`.
pub fn archetype_combine(logits: &[f64], dictionary: &ArchetypeDictionary) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = dictionary.matrix();
    if logits.len() != a.rows() {
        return Err(Error::Shape {
            op: "archetype_combine",
            left: format!("{} logits", logits.len()),
            right: format!("{} archetypes", a.rows()),
        });
    }
    let w = activation(&Matrix::row_vector(logits), Activation::SoftmaxRows);
    let out = w.matmul(a)?;
    Ok((out.into_data(), w.into_data()))
}
