//! Dense feedforward networks and the NNet text format.

use std::fmt;
use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear activation given by its knots. Between knots the
/// function interpolates linearly; outside the first and last knot the
/// end segments are extended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

/// One affine segment `slope * u + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePiece {
    pub slope: f64,
    pub intercept: f64,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Dimension(
                "piecewise-linear activation needs at least two knots".into(),
            ));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Dimension(
                "piecewise-linear knots must be finite".into(),
            ));
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Dimension(
                "piecewise-linear breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn identity() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Interior knot abscissae. Piece `i` applies on `[cut[i-1], cut[i])`.
    pub fn cuts(&self) -> Vec<f64> {
        self.knots[1..self.knots.len() - 1]
            .iter()
            .map(|k| k.0)
            .collect()
    }

    pub fn pieces(&self) -> Vec<AffinePiece> {
        self.knots
            .windows(2)
            .map(|w| {
                let (x0, y0) = w[0];
                let (x1, y1) = w[1];
                let slope = (y1 - y0) / (x1 - x0);
                AffinePiece {
                    slope,
                    intercept: y0 - slope * x0,
                }
            })
            .collect()
    }

    pub fn piece_index(&self, u: f64) -> usize {
        self.cuts().iter().take_while(|&&c| u >= c).count()
    }

    pub fn eval(&self, u: f64) -> f64 {
        let p = self.pieces()[self.piece_index(u)];
        p.slope * u + p.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
    PiecewiseLinear(PiecewiseLinear),
}

impl ActivationKind {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if u < 0.0 {
                    0.0
                } else {
                    u
                }
            }
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-u).exp()),
            ActivationKind::Tanh => u.tanh(),
            ActivationKind::Identity => u,
            ActivationKind::PiecewiseLinear(p) => p.eval(u),
        }
    }

    /// Activations approximated by a lookup table rather than encoded exactly.
    pub fn is_tabled(&self) -> bool {
        matches!(self, ActivationKind::Sigmoid | ActivationKind::Tanh)
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            ActivationKind::PiecewiseLinear(p) => p.pieces().iter().all(|q| q.slope >= 0.0),
            _ => true,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
            ActivationKind::Tanh => f.write_str("tanh"),
            ActivationKind::Identity => f.write_str("identity"),
            ActivationKind::PiecewiseLinear(p) => {
                f.write_str("pwl(")?;
                for (i, (x, y)) in p.knots.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{x:?}:{y:?}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "relu" => return Ok(ActivationKind::Relu),
            "sigmoid" | "sigm" | "logistic" => return Ok(ActivationKind::Sigmoid),
            "tanh" => return Ok(ActivationKind::Tanh),
            "identity" | "linear" | "none" => return Ok(ActivationKind::Identity),
            _ => {}
        }
        let body = t
            .strip_prefix("pwl(")
            .and_then(|b| b.strip_suffix(')'))
            .ok_or_else(|| Error::Dimension(format!("unknown activation {s:?}")))?;
        let mut knots = Vec::new();
        for pair in body.split(';').filter(|p| !p.trim().is_empty()) {
            let (x, y) = pair
                .split_once(':')
                .ok_or_else(|| Error::Dimension(format!("bad knot {pair:?}")))?;
            let x: f64 = x
                .trim()
                .parse()
                .map_err(|_| Error::Dimension(format!("bad knot {pair:?}")))?;
            let y: f64 = y
                .trim()
                .parse()
                .map_err(|_| Error::Dimension(format!("bad knot {pair:?}")))?;
            knots.push((x, y));
        }
        Ok(ActivationKind::PiecewiseLinear(PiecewiseLinear::new(
            knots,
        )?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// One row per neuron, one column per input of the layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: ActivationKind,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>, activation: ActivationKind) -> Self {
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn neurons(&self) -> usize {
        self.biases.len()
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// NNet input normalization metadata. Kept as parsed; never applied unless
/// asked for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mins: Vec<f64>,
    pub maxes: Vec<f64>,
    /// `input_dim + 1` entries; the last one belongs to the outputs.
    pub means: Vec<f64>,
    pub ranges: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v.clamp(self.mins[i], self.maxes[i]) - self.means[i]) / self.ranges[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    input_dim: usize,
    layers: Vec<Layer>,
    normalization: Option<Normalization>,
}

impl Network {
    pub fn new(name: impl Into<String>, input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let net = Self {
            name: name.into(),
            input_dim,
            layers,
            normalization: None,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        let mut fan_in = self.input_dim;
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.biases.len() {
                return Err(Error::Dimension(format!(
                    "layer {li}: {} weight rows but {} biases",
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
            if layer.biases.is_empty() {
                return Err(Error::Dimension(format!("layer {li} has no neurons")));
            }
            for (ni, row) in layer.weights.iter().enumerate() {
                if row.len() != fan_in {
                    return Err(Error::Dimension(format!(
                        "layer {li} neuron {ni}: {} weights, expected {fan_in}",
                        row.len()
                    )));
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Dimension(format!(
                        "layer {li} neuron {ni}: non-finite weight"
                    )));
                }
            }
            if layer.biases.iter().any(|b| !b.is_finite()) {
                return Err(Error::Dimension(format!("layer {li}: non-finite bias")));
            }
            fan_in = layer.neurons();
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::neurons)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn with_normalization(mut self, norm: Normalization) -> Self {
        self.normalization = Some(norm);
        self
    }

    /// Layer sizes including the input layer.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::neurons))
            .collect()
    }

    /// Distinct activations used by the network, in first-use order.
    pub fn activations(&self) -> Vec<ActivationKind> {
        let mut out: Vec<ActivationKind> = Vec::new();
        for l in &self.layers {
            if !out.contains(&l.activation) {
                out.push(l.activation.clone());
            }
        }
        out
    }

    /// Fold input normalization (mean/range only; clamping cannot be
    /// folded) into the first layer.
    pub fn fold_normalization(&self) -> Network {
        let mut net = self.clone();
        if let Some(norm) = net.normalization.take() {
            let first = &mut net.layers[0];
            for (row, b) in first.weights.iter_mut().zip(first.biases.iter_mut()) {
                for (j, w) in row.iter_mut().enumerate() {
                    *w /= norm.ranges[j];
                    *b -= *w * norm.means[j];
                }
            }
        }
        net
    }

    /// Layer-by-layer evaluation in `f64`, accumulating in input order and
    /// adding the bias last.
    pub fn forward_real(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer
                .weights
                .iter()
                .zip(&layer.biases)
                .map(|(row, b)| {
                    let mut terms = row.iter().zip(&cur).map(|(w, v)| w * v);
                    let first = terms.next().unwrap_or(0.0);
                    let acc = terms.fold(first, |acc, t| acc + t);
                    layer.activation.eval(acc + b)
                })
                .collect();
        }
        Ok(cur)
    }

    /// Serialize in NNet text form. Activations are recorded in a comment
    /// line that other NNet readers ignore.
    pub fn to_nnet(&self) -> String {
        let mut s = String::new();
        let sizes = self.sizes();
        let _ = writeln!(
            s,
            "// {}",
            if self.name.is_empty() {
                "network"
            } else {
                &self.name
            }
        );
        let acts: Vec<String> = self
            .layers
            .iter()
            .map(|l| l.activation.to_string())
            .collect();
        let _ = writeln!(s, "// activations: {}", acts.join(","));
        let max = sizes.iter().copied().max().unwrap_or(0);
        let _ = writeln!(
            s,
            "{},{},{},{},",
            self.layers.len(),
            self.input_dim,
            self.output_dim(),
            max
        );
        let _ = writeln!(s, "{}", join_row(sizes.iter().map(|v| v.to_string())));
        let _ = writeln!(s, "0,");
        let n = self.input_dim;
        let default = Normalization {
            mins: vec![0.0; n],
            maxes: vec![1.0; n],
            means: vec![0.0; n + 1],
            ranges: vec![1.0; n + 1],
        };
        let norm = self.normalization.as_ref().unwrap_or(&default);
        for v in [&norm.mins, &norm.maxes, &norm.means, &norm.ranges] {
            let _ = writeln!(s, "{}", join_row(v.iter().map(|x| format!("{x:?}"))));
        }
        for layer in &self.layers {
            for row in &layer.weights {
                let _ = writeln!(s, "{}", join_row(row.iter().map(|x| format!("{x:?}"))));
            }
            for b in &layer.biases {
                let _ = writeln!(s, "{b:?},");
            }
        }
        s
    }
}

fn join_row(items: impl Iterator<Item = String>) -> String {
    let mut s = items.collect::<Vec<_>>().join(",");
    s.push(',');
    s
}

struct NnetLines {
    lines: Vec<(usize, String)>,
    pos: usize,
    last_line: usize,
}

impl NnetLines {
    fn next_row(&mut self, what: &str) -> Result<(usize, Vec<f64>)> {
        let (no, text) = self.lines.get(self.pos).cloned().ok_or_else(|| {
            Error::parse(
                self.last_line + 1,
                format!("truncated file: expected {what}"),
            )
        })?;
        self.pos += 1;
        let mut vals = Vec::new();
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(no, format!("non-numeric token {tok:?} in {what}")))?;
            vals.push(v);
        }
        Ok((no, vals))
    }

    fn row_of_len(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let (no, vals) = self.next_row(what)?;
        if vals.len() != len {
            return Err(Error::parse(
                no,
                format!(
                    "dimension mismatch in {what}: expected {len} values, found {}",
                    vals.len()
                ),
            ));
        }
        Ok(vals)
    }
}

fn as_count(v: f64, line: usize, what: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::parse(
            line,
            format!("{what} must be a non-negative integer, got {v}"),
        ));
    }
    Ok(v as usize)
}

/// Parse an NNet file. Hidden layers default to ReLU and the output layer
/// to identity unless an `// activations:` comment says otherwise.
pub fn parse_nnet(source: impl BufRead) -> Result<Network> {
    let mut lines = Vec::new();
    let mut name = String::new();
    let mut activations: Option<(usize, Vec<ActivationKind>)> = None;
    let mut last_line = 0;
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        last_line = no;
        let t = line.trim();
        if let Some(c) = t.strip_prefix("//") {
            let c = c.trim();
            if let Some(list) = c.strip_prefix("activations:") {
                let acts = split_activations(list)
                    .into_iter()
                    .map(|a| {
                        a.parse::<ActivationKind>()
                            .map_err(|e| Error::parse(no, e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                activations = Some((no, acts));
            } else if name.is_empty() && !c.is_empty() {
                name = c.to_string();
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        lines.push((no, t.to_string()));
    }
    let mut rd = NnetLines {
        lines,
        pos: 0,
        last_line,
    };

    let (hno, header) = rd.next_row("header")?;
    if header.len() < 4 {
        return Err(Error::parse(
            hno,
            "header needs numLayers, inputSize, outputSize, maxLayerSize",
        ));
    }
    let num_layers = as_count(header[0], hno, "numLayers")?;
    let input_size = as_count(header[1], hno, "inputSize")?;
    let output_size = as_count(header[2], hno, "outputSize")?;
    if num_layers == 0 {
        return Err(Error::parse(hno, "numLayers must be positive"));
    }
    let (sno, raw_sizes) = rd.next_row("layer sizes")?;
    if raw_sizes.len() != num_layers + 1 {
        return Err(Error::parse(
            sno,
            format!(
                "dimension mismatch: {} layer sizes for {num_layers} layers",
                raw_sizes.len()
            ),
        ));
    }
    let sizes = raw_sizes
        .iter()
        .map(|&v| as_count(v, sno, "layer size"))
        .collect::<Result<Vec<_>>>()?;
    if sizes[0] != input_size || sizes[num_layers] != output_size {
        return Err(Error::parse(
            sno,
            "dimension mismatch: layer sizes disagree with header",
        ));
    }
    rd.next_row("legacy flag")?;
    let norm = Normalization {
        mins: rd.row_of_len(input_size, "input minimums")?,
        maxes: rd.row_of_len(input_size, "input maximums")?,
        means: rd.row_of_len(input_size + 1, "means")?,
        ranges: rd.row_of_len(input_size + 1, "ranges")?,
    };

    let acts = match activations {
        Some((no, acts)) => {
            if acts.len() != num_layers {
                return Err(Error::parse(
                    no,
                    format!("{} activations for {num_layers} layers", acts.len()),
                ));
            }
            acts
        }
        None => (0..num_layers)
            .map(|i| {
                if i + 1 == num_layers {
                    ActivationKind::Identity
                } else {
                    ActivationKind::Relu
                }
            })
            .collect(),
    };

    let mut layers = Vec::with_capacity(num_layers);
    for (li, act) in acts.into_iter().enumerate() {
        let (fan_in, fan_out) = (sizes[li], sizes[li + 1]);
        let mut weights = Vec::with_capacity(fan_out);
        for n in 0..fan_out {
            weights.push(rd.row_of_len(fan_in, &format!("layer {li} weight row {n}"))?);
        }
        let mut biases = Vec::with_capacity(fan_out);
        for n in 0..fan_out {
            biases.push(rd.row_of_len(1, &format!("layer {li} bias {n}"))?[0]);
        }
        layers.push(Layer::new(weights, biases, act));
    }
    if let Some((no, _)) = rd.lines.get(rd.pos) {
        return Err(Error::parse(
            *no,
            "dimension mismatch: trailing data after last layer",
        ));
    }
    let net = Network::new(name, input_size, layers)?;
    Ok(net.with_normalization(norm))
}

fn split_activations(list: &str) -> Vec<String> {
    // Commas inside pwl(...) belong to the knot list.
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for ch in list.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == ',' && depth == 0 {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(ch);
        }
    }
    out.push(cur);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn parse_nnet_str(text: &str) -> Result<Network> {
    parse_nnet(text.as_bytes())
}
