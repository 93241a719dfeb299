//! Polynomial neural networks: forward evaluation, symbolic boundary
//! expansion, and reverse-mode parameter gradients.
//!
//! Weight convention: row `i` of `weights[l]` produces unit `i` of layer
//! `l + 1`, i.e. `pre[l] = W[l] . act[l-1] + b[l]`. The activation is the
//! element-wise power `z^d`, applied after every layer except the last.

use crate::poly::{PolyError, Polynomial};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum PnnError {
    BadArchitecture(String),
    ShapeMismatch(String),
    NonFiniteParameter { layer: usize },
    ClassOutOfRange { class: usize, k: usize },
    Io(std::io::Error),
    /// Malformed network file; the message carries serde's line/column context.
    Parse(String),
    Poly(PolyError),
}

impl fmt::Display for PnnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PnnError::BadArchitecture(m) => write!(f, "bad architecture: {m}"),
            PnnError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            PnnError::NonFiniteParameter { layer } => {
                write!(f, "non-finite parameter in layer {layer}")
            }
            PnnError::ClassOutOfRange { class, k } => {
                write!(f, "class index {class} out of range for {k} outputs")
            }
            PnnError::Io(e) => write!(f, "io error: {e}"),
            PnnError::Parse(m) => write!(f, "network file parse error: {m}"),
            PnnError::Poly(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PnnError {}

impl From<PolyError> for PnnError {
    fn from(e: PolyError) -> Self {
        PnnError::Poly(e)
    }
}

impl From<std::io::Error> for PnnError {
    fn from(e: std::io::Error) -> Self {
        PnnError::Io(e)
    }
}

/// Layer widths `[n, h1, .., hs, k]` plus the activation degree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub dims: Vec<usize>,
    pub activation_degree: u32,
}

impl Architecture {
    pub fn new(dims: Vec<usize>, activation_degree: u32) -> Result<Self, PnnError> {
        if dims.len() < 3 {
            return Err(PnnError::BadArchitecture(
                "need at least one hidden layer (dims = [n, h.., k])".into(),
            ));
        }
        if dims.iter().any(|&w| w == 0) {
            return Err(PnnError::BadArchitecture("all layer widths must be >= 1".into()));
        }
        if activation_degree == 0 {
            return Err(PnnError::BadArchitecture("activation degree must be >= 1".into()));
        }
        Ok(Architecture { dims, activation_degree })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    /// Number of linear layers (= hidden_layers + 1).
    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        (0..self.num_layers())
            .map(|l| self.dims[l + 1] * self.dims[l] + self.dims[l + 1])
            .sum()
    }
}

/// Weights and biases of a polynomial network; immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    /// `weights[l][i][j]`: layer `l`, output unit `i`, input unit `j`.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

/// On-disk JSON schema; field order is fixed for deterministic writes.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    dims: Vec<usize>,
    degree: u32,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn new(
        arch: Architecture,
        weights: Vec<Vec<Vec<f64>>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, PnnError> {
        let layers = arch.num_layers();
        if weights.len() != layers || biases.len() != layers {
            return Err(PnnError::ShapeMismatch(format!(
                "expected {layers} weight/bias layers, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            let (rows, cols) = (arch.dims[l + 1], arch.dims[l]);
            if weights[l].len() != rows || biases[l].len() != rows {
                return Err(PnnError::ShapeMismatch(format!(
                    "layer {l}: expected {rows} rows, got {} weights / {} biases",
                    weights[l].len(),
                    biases[l].len()
                )));
            }
            for row in &weights[l] {
                if row.len() != cols {
                    return Err(PnnError::ShapeMismatch(format!(
                        "layer {l}: expected {cols} columns, got {}",
                        row.len()
                    )));
                }
            }
            let finite = weights[l].iter().flatten().chain(biases[l].iter()).all(|v| v.is_finite());
            if !finite {
                return Err(PnnError::NonFiniteParameter { layer: l });
            }
        }
        Ok(NetworkParams { arch, weights, biases })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Vec<Vec<f64>>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// All-zero parameters with the same shape; gradient accumulator seed.
    pub fn zeros_like(arch: &Architecture) -> Self {
        let weights = (0..arch.num_layers())
            .map(|l| vec![vec![0.0; arch.dims[l]]; arch.dims[l + 1]])
            .collect();
        let biases = (0..arch.num_layers()).map(|l| vec![0.0; arch.dims[l + 1]]).collect();
        NetworkParams { arch: arch.clone(), weights, biases }
    }

    /// Flat parameter vector: weights row-major then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.arch.num_params());
        for l in 0..self.arch.num_layers() {
            for row in &self.weights[l] {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn from_flat(arch: &Architecture, flat: &[f64]) -> Result<Self, PnnError> {
        if flat.len() != arch.num_params() {
            return Err(PnnError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                flat.len()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut pos = 0;
        for l in 0..arch.num_layers() {
            let (rows, cols) = (arch.dims[l + 1], arch.dims[l]);
            let mut w = Vec::with_capacity(rows);
            for _ in 0..rows {
                w.push(flat[pos..pos + cols].to_vec());
                pos += cols;
            }
            weights.push(w);
            biases.push(flat[pos..pos + rows].to_vec());
            pos += rows;
        }
        NetworkParams::new(arch.clone(), weights, biases)
    }

    /// Logits `W_last . act( .. act(W_1 x + b_1) .. ) + b_last`; no activation
    /// after the final layer.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, PnnError> {
        if x.len() != self.arch.input_dim() {
            return Err(PnnError::ShapeMismatch(format!(
                "input length {} != {}",
                x.len(),
                self.arch.input_dim()
            )));
        }
        let mut act = x.to_vec();
        let layers = self.arch.num_layers();
        for l in 0..layers {
            let mut pre = self.biases[l].clone();
            for (i, row) in self.weights[l].iter().enumerate() {
                pre[i] += row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
            }
            if l + 1 < layers {
                let d = self.arch.activation_degree as i32;
                for v in &mut pre {
                    *v = v.powi(d);
                }
            }
            act = pre;
        }
        Ok(act)
    }

    /// Per-layer pre-activations, saved for backpropagation.
    fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, PnnError> {
        if x.len() != self.arch.input_dim() {
            return Err(PnnError::ShapeMismatch(format!(
                "input length {} != {}",
                x.len(),
                self.arch.input_dim()
            )));
        }
        let d = self.arch.activation_degree as i32;
        let layers = self.arch.num_layers();
        let mut pres = Vec::with_capacity(layers);
        let mut act = x.to_vec();
        for l in 0..layers {
            let mut pre = self.biases[l].clone();
            for (i, row) in self.weights[l].iter().enumerate() {
                pre[i] += row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
            }
            if l + 1 < layers {
                act = pre.iter().map(|v| v.powi(d)).collect();
            }
            pres.push(pre);
        }
        Ok(pres)
    }

    /// Accumulates the gradient of `<cotangent, logits(x)>` with respect to
    /// every weight and bias into `grad`.
    pub fn vjp_into(
        &self,
        x: &[f64],
        cotangent: &[f64],
        grad: &mut NetworkParams,
    ) -> Result<(), PnnError> {
        if cotangent.len() != self.arch.output_dim() {
            return Err(PnnError::ShapeMismatch(format!(
                "cotangent length {} != {}",
                cotangent.len(),
                self.arch.output_dim()
            )));
        }
        let pres = self.forward_trace(x)?;
        let d = self.arch.activation_degree as i32;
        let layers = self.arch.num_layers();
        // Activations feeding each layer: acts[l] is the input of layer l.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        for l in 0..layers - 1 {
            acts.push(pres[l].iter().map(|v| v.powi(d)).collect());
        }
        let mut delta = cotangent.to_vec();
        for l in (0..layers).rev() {
            for (i, di) in delta.iter().enumerate() {
                for (j, aj) in acts[l].iter().enumerate() {
                    grad.weights[l][i][j] += di * aj;
                }
                grad.biases[l][i] += di;
            }
            if l > 0 {
                let mut prev = vec![0.0; self.arch.dims[l]];
                for (i, di) in delta.iter().enumerate() {
                    for (j, w) in self.weights[l][i].iter().enumerate() {
                        prev[j] += w * di;
                    }
                }
                // Chain through the activation: d/dz z^d = d z^(d-1).
                delta = prev
                    .iter()
                    .zip(&pres[l - 1])
                    .map(|(g, z)| g * (d as f64) * z.powi(d - 1))
                    .collect();
            }
        }
        Ok(())
    }

    /// Exact reverse-mode gradients summed over a batch of
    /// (input, logit-cotangent) pairs.
    pub fn parameter_gradients(
        &self,
        batch: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<NetworkParams, PnnError> {
        let mut grad = NetworkParams::zeros_like(&self.arch);
        for (x, ct) in batch {
            self.vjp_into(x, ct, &mut grad)?;
        }
        Ok(grad)
    }

    /// All logits as fully expanded polynomials in the input variables.
    pub fn logit_polynomials(&self) -> Result<Vec<Polynomial>, PnnError> {
        let n = self.arch.input_dim();
        let d = self.arch.activation_degree;
        let layers = self.arch.num_layers();
        // First hidden layer straight from the affine expansion, later layers
        // by affine combination then repeated-squaring power.
        let mut vals: Vec<Polynomial> = self.weights[0]
            .iter()
            .zip(&self.biases[0])
            .map(|(row, &b)| Polynomial::expand_affine_power(row, b, d))
            .collect::<Result<_, _>>()?;
        for l in 1..layers {
            let mut next = Vec::with_capacity(self.arch.dims[l + 1]);
            for (row, &b) in self.weights[l].iter().zip(&self.biases[l]) {
                let mut p = Polynomial::constant_re(n, b);
                for (w, v) in row.iter().zip(&vals) {
                    if *w != 0.0 {
                        p = p.add(&v.scale(num_complex::Complex64::new(*w, 0.0)))?;
                    }
                }
                if l + 1 < layers {
                    p = p.pow(d)?;
                }
                next.push(p);
            }
            vals = next;
        }
        Ok(vals)
    }

    /// Fully expanded boundary polynomial `B = f_c - f_c'`. Expands the
    /// output-difference directly so hidden layers are walked once.
    pub fn boundary_polynomial(&self, c: usize, cp: usize) -> Result<Polynomial, PnnError> {
        let k = self.arch.output_dim();
        if c >= k {
            return Err(PnnError::ClassOutOfRange { class: c, k });
        }
        if cp >= k {
            return Err(PnnError::ClassOutOfRange { class: cp, k });
        }
        if c == cp {
            return Err(PnnError::BadArchitecture("boundary needs two distinct classes".into()));
        }
        let n = self.arch.input_dim();
        let d = self.arch.activation_degree;
        let layers = self.arch.num_layers();
        let mut vals: Vec<Polynomial> = self.weights[0]
            .iter()
            .zip(&self.biases[0])
            .map(|(row, &b)| Polynomial::expand_affine_power(row, b, d))
            .collect::<Result<_, _>>()?;
        for l in 1..layers - 1 {
            let mut next = Vec::with_capacity(self.arch.dims[l + 1]);
            for (row, &b) in self.weights[l].iter().zip(&self.biases[l]) {
                let mut p = Polynomial::constant_re(n, b);
                for (w, v) in row.iter().zip(&vals) {
                    if *w != 0.0 {
                        p = p.add(&v.scale(num_complex::Complex64::new(*w, 0.0)))?;
                    }
                }
                next.push(p.pow(d)?);
            }
            vals = next;
        }
        let last = layers - 1;
        let mut b = Polynomial::constant_re(n, self.biases[last][c] - self.biases[last][cp]);
        for (j, v) in vals.iter().enumerate() {
            let w = self.weights[last][c][j] - self.weights[last][cp][j];
            if w != 0.0 {
                b = b.add(&v.scale(num_complex::Complex64::new(w, 0.0)))?;
            }
        }
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            dims: self.arch.dims.clone(),
            degree: self.arch.activation_degree,
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("network serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, PnnError> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| PnnError::Parse(e.to_string()))?;
        let arch = Architecture::new(file.dims, file.degree)?;
        NetworkParams::new(arch, file.weights, file.biases)
    }

    pub fn save(&self, path: &Path) -> Result<(), PnnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PnnError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    fn fixture(name: &str) -> NetworkParams {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        NetworkParams::load(Path::new(&path)).unwrap()
    }

    pub(crate) fn example1() -> NetworkParams {
        fixture("example1.json")
    }

    pub(crate) fn example2() -> NetworkParams {
        fixture("example2.json")
    }

    fn example1_boundary_terms() -> Polynomial {
        Polynomial::from_real_terms(
            2,
            &[
                (vec![2, 0], -8.0),
                (vec![1, 1], -2.0),
                (vec![0, 2], 3.0),
                (vec![1, 0], -6.0),
                (vec![0, 1], -2.0),
            ],
        )
    }

    #[test]
    fn example1_fixture_loads_exact_integers() {
        let net = example1();
        assert_eq!(net.weights()[0], vec![vec![1.0, 2.0], vec![3.0, 1.0]]);
        assert_eq!(net.biases()[0], vec![0.0, 1.0]);
        assert_eq!(net.weights()[1], vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert_eq!(net.biases()[1], vec![2.0, 1.0]);
    }

    #[test]
    fn example1_forward_at_origin() {
        let net = example1();
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn example2_logit_difference_at_origin() {
        let net = example2();
        let logits = net.forward(&[0.0, 0.0]).unwrap();
        assert_eq!(logits[0] - logits[1], -3.0);
    }

    #[test]
    fn linear_net_composes_linear_maps() {
        // d = 1, identity-like weights, zero bias: forward == product of maps.
        let arch = Architecture::new(vec![2, 2, 2], 1).unwrap();
        let net = NetworkParams::new(
            arch,
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![2.0, 0.0], vec![0.0, 3.0]],
            ],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.5, -2.0]).unwrap(), vec![3.0, -6.0]);
    }

    #[test]
    fn forward_rejects_bad_input_length() {
        let net = example1();
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn example1_boundary_expansion() {
        let b = example1().boundary_polynomial(0, 1).unwrap();
        assert_eq!(b, example1_boundary_terms());
    }

    #[test]
    fn example2_boundary_equals_factored_product() {
        let b = example2().boundary_polynomial(0, 1).unwrap();
        let l1 = Polynomial::from_real_terms(
            2,
            &[(vec![0, 1], 1.0), (vec![1, 0], -2.0), (vec![0, 0], -1.0)],
        );
        let l2 = Polynomial::from_real_terms(
            2,
            &[(vec![1, 0], 4.0), (vec![0, 1], 3.0), (vec![0, 0], 3.0)],
        );
        assert_eq!(b, l1.mul(&l2).unwrap());
    }

    #[test]
    fn equal_output_rows_give_zero_boundary() {
        let arch = Architecture::new(vec![2, 2, 2], 2).unwrap();
        let net = NetworkParams::new(
            arch,
            vec![
                vec![vec![1.0, 2.0], vec![3.0, 1.0]],
                vec![vec![2.0, 1.0], vec![2.0, 1.0]],
            ],
            vec![vec![0.0, 1.0], vec![5.0, 5.0]],
        )
        .unwrap();
        assert!(net.boundary_polynomial(0, 1).unwrap().is_zero());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let net = example1();
        let g = net.parameter_gradients(&[(vec![0.3, -0.7], vec![0.0, 0.0])]).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_least_squares_gradient() {
        // Squared loss L = |Wx + b - y|^2 has dL/dW = 2 (Wx + b - y) x^T.
        // A [1,1,1] architecture with identity second layer reduces to it.
        let arch = Architecture::new(vec![2, 2, 2], 1).unwrap();
        let w = vec![vec![0.5, -0.25], vec![1.0, 0.75]];
        let b = vec![0.1, -0.2];
        let net = NetworkParams::new(
            arch,
            vec![w.clone(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![b.clone(), vec![0.0, 0.0]],
        )
        .unwrap();
        let x = vec![0.4, -1.2];
        let y = vec![1.0, 0.0];
        let out = net.forward(&x).unwrap();
        let resid: Vec<f64> = out.iter().zip(&y).map(|(o, t)| 2.0 * (o - t)).collect();
        let g = net.parameter_gradients(&[(x.clone(), resid.clone())]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = resid[i] * x[j];
                assert!((g.weights()[0][i][j] - expect).abs() < 1e-12);
            }
            assert!((g.biases()[0][i] - resid[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_and_rejects_wrong_dims() {
        let net = example1();
        let text = net.to_json();
        let back = NetworkParams::from_json(&text).unwrap();
        assert_eq!(net, back);

        let bad = text.replace("\"dims\": [\n    2,", "\"dims\": [\n    3,");
        assert!(NetworkParams::from_json(&bad).is_err());
    }
}
