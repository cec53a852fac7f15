//! Text serialization of trained models.
//!
//! ```text
//! pqgram-model v1 p=2 q=2 dim=4
//! config k=1 mu1=5 mu2=5 beta=0.0001 eta=0.01 epochs=600 refresh=50 cap=200 seed=0 final_loss=12.5
//! *<TAB>a<TAB>*<TAB>b<TAB>0.5413248546129181
//! ...one line per vocabulary tuple, in index order...
//! OOV 0.5413248546129181
//! ```
//!
//! `dim` counts the OOV slot. Floats use Rust's shortest round-trip
//! formatting, so saving and loading is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lmnn::{TrainConfig, TrainedModel};
use crate::metric::WeightModel;
use crate::pqgram::{GramShape, LabelTuple, Vocabulary};
use crate::tree::{validate_label, DUMMY_LABEL};

const MAGIC: &str = "pqgram-model";
const VERSION: &str = "v1";

pub fn model_to_string(m: &TrainedModel) -> String {
    let shape = m.shape();
    let w = m.weights.raw();
    let c = &m.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION} p={} q={} dim={}", shape.p(), shape.q(), w.len());
    let _ = writeln!(
        out,
        "config k={} mu1={} mu2={} beta={} eta={} epochs={} refresh={} cap={} seed={} final_loss={}",
        c.k,
        c.mu1,
        c.mu2,
        c.beta,
        c.eta,
        c.epochs,
        c.impostor_refresh_every,
        c.subsample_cap,
        c.seed,
        m.final_loss
    );
    for (tuple, weight) in m.vocabulary().tuples().iter().zip(w) {
        for label in tuple.labels() {
            out.push_str(label);
            out.push('\t');
        }
        let _ = writeln!(out, "{weight}");
    }
    let _ = writeln!(out, "OOV {}", w[m.vocabulary().oov_index()]);
    out
}

pub fn save_model(m: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Model {
        line,
        message: message.into(),
    }
}

/// Reads `key=value` fields in the given order.
fn fields<'a>(line_no: usize, words: &[&'a str], keys: &[&str]) -> Result<Vec<&'a str>> {
    if words.len() != keys.len() {
        return Err(err(line_no, format!("expected {} fields, found {}", keys.len(), words.len())));
    }
    words
        .iter()
        .zip(keys)
        .map(|(word, key)| {
            word.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| err(line_no, format!("expected `{key}=`, found {word:?}")))
        })
        .collect()
}

fn num<T: FromStr>(line_no: usize, key: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| err(line_no, format!("bad value for {key}: {text:?}")))
}

fn weight(line_no: usize, text: &str) -> Result<f64> {
    let w: f64 = num(line_no, "weight", text)?;
    if !w.is_finite() {
        return Err(err(line_no, format!("non-finite weight {text:?}")));
    }
    Ok(w)
}

pub fn parse_model(text: &str) -> Result<TrainedModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (n, header) = lines.next().ok_or_else(|| err(1, "empty model file"))?;
    let words: Vec<&str> = header.split(' ').collect();
    if words.first() != Some(&MAGIC) {
        return Err(err(n, "not a pqgram model file"));
    }
    match words.get(1) {
        Some(&VERSION) => {}
        Some(v) => return Err(Error::ModelVersion((*v).to_owned())),
        None => return Err(err(n, "missing version")),
    }
    let h = fields(n, &words[2..], &["p", "q", "dim"])?;
    let p: usize = num(n, "p", h[0])?;
    let q: usize = num(n, "q", h[1])?;
    let dim: usize = num(n, "dim", h[2])?;
    let shape = GramShape::new(p, q)?;
    if dim == 0 {
        return Err(err(n, "dim must include the OOV slot"));
    }

    let (n, config) = lines.next().ok_or_else(|| err(2, "missing config line"))?;
    let words: Vec<&str> = config.split(' ').collect();
    if words.first() != Some(&"config") {
        return Err(err(n, "expected config line"));
    }
    let c = fields(
        n,
        &words[1..],
        &["k", "mu1", "mu2", "beta", "eta", "epochs", "refresh", "cap", "seed", "final_loss"],
    )?;
    let config = TrainConfig {
        k: num(n, "k", c[0])?,
        mu1: num(n, "mu1", c[1])?,
        mu2: num(n, "mu2", c[2])?,
        beta: num(n, "beta", c[3])?,
        eta: num(n, "eta", c[4])?,
        epochs: num(n, "epochs", c[5])?,
        impostor_refresh_every: num(n, "refresh", c[6])?,
        subsample_cap: num(n, "cap", c[7])?,
        seed: num(n, "seed", c[8])?,
    };
    let final_loss: f64 = num(n, "final_loss", c[9])?;

    // dim comes from untrusted input; do not preallocate from it
    let mut tuples = Vec::new();
    let mut raw = Vec::new();
    for _ in 0..dim - 1 {
        let (n, line) = lines
            .next()
            .ok_or_else(|| err(3 + tuples.len(), format!("truncated: expected {} tuple lines", dim - 1)))?;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != shape.width() + 1 {
            return Err(err(
                n,
                format!("expected {} labels and a weight", shape.width()),
            ));
        }
        let (labels, w) = parts.split_at(shape.width());
        for &label in labels {
            if label != DUMMY_LABEL {
                validate_label(label).map_err(|e| err(n, e.to_string()))?;
            }
        }
        tuples.push(LabelTuple::new(labels.iter().copied()));
        raw.push(weight(n, w[0])?);
    }

    let (n, oov) = lines
        .next()
        .ok_or_else(|| err(dim + 2, "truncated: missing OOV line"))?;
    let w = oov
        .strip_prefix("OOV ")
        .ok_or_else(|| err(n, "expected `OOV <weight>`"))?;
    raw.push(weight(n, w)?);
    if let Some((n, extra)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(err(n, format!("unexpected content after OOV line: {extra:?}")));
    }

    let vocab = Vocabulary::from_tuples(shape, tuples)?;
    if vocab.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: vocab.dim(),
        });
    }
    Ok(TrainedModel {
        weights: WeightModel::from_raw(Arc::new(vocab), raw)?,
        config,
        final_loss,
        loss_trace: Vec::new(),
    })
}
