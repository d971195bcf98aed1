//! The backbone map F from the unit ball to a real score, with two concrete
//! implementations: a small dense feedforward network and an analytic ball
//! classifier, plus model file IO and the Lipschitz diagnostic.

use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::activations;
use crate::error::{Error, Result};
use crate::geometry::{BallSpec, Point};
use crate::stealth::AttackParams;

/// A class label from a finite label set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(id: impl Into<String>) -> Self {
        Label(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-layer nonlinearity of a dense network. This is the model-file
/// vocabulary; the attack term has its own activation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerActivation {
    Identity,
    Relu,
    Sigmoid,
}

impl LayerActivation {
    fn apply(&self, s: f64) -> f64 {
        match self {
            LayerActivation::Identity => s,
            LayerActivation::Relu => activations::relu(s),
            LayerActivation::Sigmoid => activations::sigmoid(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// Row-major: one row per output neuron.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: LayerActivation,
}

/// A fully connected feedforward network with scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl DenseNetwork {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::schema("n", "input dimension must be at least 1"));
        }
        if layers.is_empty() {
            return Err(Error::schema("layers", "must not be empty"));
        }
        let mut in_dim = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.is_empty() {
                return Err(Error::schema(
                    format!("layers[{i}].weights"),
                    "must have at least one row",
                ));
            }
            for (r, row) in layer.weights.iter().enumerate() {
                if row.len() != in_dim {
                    return Err(Error::schema(
                        format!("layers[{i}].weights[{r}]"),
                        format!("expected {in_dim} columns, got {}", row.len()),
                    ));
                }
            }
            if layer.bias.len() != layer.weights.len() {
                return Err(Error::schema(
                    format!("layers[{i}].bias"),
                    format!(
                        "expected {} entries, got {}",
                        layer.weights.len(),
                        layer.bias.len()
                    ),
                ));
            }
            in_dim = layer.weights.len();
        }
        if in_dim != 1 {
            return Err(Error::schema(
                format!("layers[{}]", layers.len() - 1),
                format!("final layer must have output dimension 1, got {in_dim}"),
            ));
        }
        Ok(Self { input_dim, layers })
    }

    /// Single identity layer `x -> w . x + b`.
    pub fn affine(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let n = weights.len();
        Self::new(
            n,
            vec![DenseLayer {
                weights: vec![weights],
                bias: vec![bias],
                activation: LayerActivation::Identity,
            }],
        )
    }

    /// Random network with sigmoid hidden layers and an identity output
    /// head; weights uniform in `[-1, 1] / sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut in_dim = input_dim;
        for (i, &width) in hidden.iter().chain(std::iter::once(&1usize)).enumerate() {
            let is_output = i == hidden.len();
            let scale = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..width)
                .map(|_| {
                    (0..in_dim)
                        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
                        .collect()
                })
                .collect();
            let bias = (0..width)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            layers.push(DenseLayer {
                weights,
                bias,
                activation: if is_output {
                    LayerActivation::Identity
                } else {
                    LayerActivation::Sigmoid
                },
            });
            in_dim = width;
        }
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    fn forward(&self, x: &Point) -> Result<f64> {
        let mut values: Vec<f64> = x.coords().to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.weights.len());
            for (row, b) in layer.weights.iter().zip(&layer.bias) {
                let s: f64 = row.iter().zip(&values).map(|(w, v)| w * v).sum::<f64>() + b;
                let out = layer.activation.apply(s);
                if !out.is_finite() {
                    return Err(Error::NonFinite {
                        context: "dense network forward pass".to_string(),
                    });
                }
                next.push(out);
            }
            values = next;
        }
        Ok(values[0])
    }
}

/// Analytic classifier: +1 inside a fixed ball strictly within the unit
/// ball, -1 outside. Every boundary point has oppositely labeled points at
/// arbitrarily small outward distance, so the adversarial reach condition
/// holds for every positive reach.
#[derive(Clone, Debug, PartialEq)]
pub struct BallClassifier {
    region: BallSpec,
    label_inside: Label,
    label_outside: Label,
}

impl BallClassifier {
    pub fn new(region: BallSpec, label_inside: Label, label_outside: Label) -> Result<Self> {
        // re-assert containment; BallSpec::new alone does not require it
        let r = BallSpec::inside_unit_ball(region.center().clone(), region.radius())?;
        Ok(Self {
            region: r,
            label_inside,
            label_outside,
        })
    }

    pub fn region(&self) -> &BallSpec {
        &self.region
    }

    fn score(&self, x: &Point) -> Result<f64> {
        Ok(if self.region.contains(x)? { 1.0 } else { -1.0 })
    }
}

/// An evaluatable decision map on the unit ball.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassifierMap {
    Dense(DenseNetwork),
    Ball(BallClassifier),
    /// A backbone with an additive one-neuron attack term.
    Attacked {
        base: Box<ClassifierMap>,
        attack: AttackParams,
    },
}

impl ClassifierMap {
    pub fn input_dim(&self) -> usize {
        match self {
            ClassifierMap::Dense(net) => net.input_dim(),
            ClassifierMap::Ball(ball) => ball.region.dim(),
            ClassifierMap::Attacked { base, .. } => base.input_dim(),
        }
    }

    /// Evaluate the real decision score at a point of the unit ball.
    /// Inputs within `TOL_BALL` of the ball are renormalized; anything
    /// farther out is an error.
    pub fn evaluate(&self, x: &Point) -> Result<f64> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        let x = x.as_unit_ball_input()?;
        self.evaluate_unchecked(&x)
    }

    /// Score without the domain check; `x` must already be a valid input.
    fn evaluate_unchecked(&self, x: &Point) -> Result<f64> {
        match self {
            ClassifierMap::Dense(net) => net.forward(x),
            ClassifierMap::Ball(ball) => ball.score(x),
            ClassifierMap::Attacked { base, attack } => {
                let score = base.evaluate_unchecked(x)? + crate::stealth::attack_term(attack, x)?;
                if !score.is_finite() {
                    return Err(Error::NonFinite {
                        context: "attacked map".to_string(),
                    });
                }
                Ok(score)
            }
        }
    }

    /// The label pair scores map onto: (at-or-above threshold, below).
    pub fn labels(&self) -> (&Label, &Label) {
        match self {
            ClassifierMap::Ball(ball) => (&ball.label_inside, &ball.label_outside),
            ClassifierMap::Dense(_) => (&POSITIVE, &NEGATIVE),
            ClassifierMap::Attacked { base, .. } => base.labels(),
        }
    }

    /// Threshold the score into a label. Ties go to the inside label.
    pub fn classify(&self, x: &Point, threshold: f64) -> Result<Label> {
        let score = self.evaluate(x)?;
        let (inside, outside) = self.labels();
        Ok(if score >= threshold {
            inside.clone()
        } else {
            outside.clone()
        })
    }

    /// Largest difference quotient `|F(x) - F(y)| / |x - y|` over the given
    /// pairs. Coincident pairs are skipped; an empty usable set is an error.
    pub fn empirical_lipschitz(&self, pairs: &[(Point, Point)]) -> Result<f64> {
        let mut best: Option<f64> = None;
        for (x, y) in pairs {
            let dist = x.distance(y)?;
            if dist == 0.0 {
                continue;
            }
            let ratio = (self.evaluate(x)? - self.evaluate(y)?).abs() / dist;
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
        best.ok_or(Error::EmptySample)
    }
}

static POSITIVE: LazyLock<Label> = LazyLock::new(|| Label::new("positive"));
static NEGATIVE: LazyLock<Label> = LazyLock::new(|| Label::new("negative"));

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

fn field_f64(value: &Value, path: &str) -> Result<f64> {
    value
        .as_f64()
        .ok_or_else(|| Error::schema(path, "expected a number"))
}

fn field_array<'v>(value: &'v Value, path: &str) -> Result<&'v Vec<Value>> {
    value
        .as_array()
        .ok_or_else(|| Error::schema(path, "expected an array"))
}

fn parse_f64_array(value: &Value, path: &str) -> Result<Vec<f64>> {
    field_array(value, path)?
        .iter()
        .enumerate()
        .map(|(i, v)| field_f64(v, &format!("{path}[{i}]")))
        .collect()
}

fn parse_dense(value: &Value) -> Result<DenseNetwork> {
    let n = value
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::schema("n", "expected a positive integer"))? as usize;
    let layers_val = field_array(
        value
            .get("layers")
            .ok_or_else(|| Error::schema("layers", "missing field"))?,
        "layers",
    )?;
    let mut layers = Vec::with_capacity(layers_val.len());
    for (i, layer) in layers_val.iter().enumerate() {
        let weights_val = field_array(
            layer
                .get("weights")
                .ok_or_else(|| Error::schema(format!("layers[{i}].weights"), "missing field"))?,
            &format!("layers[{i}].weights"),
        )?;
        let weights: Vec<Vec<f64>> = weights_val
            .iter()
            .enumerate()
            .map(|(r, row)| parse_f64_array(row, &format!("layers[{i}].weights[{r}]")))
            .collect::<Result<_>>()?;
        let bias = parse_f64_array(
            layer
                .get("bias")
                .ok_or_else(|| Error::schema(format!("layers[{i}].bias"), "missing field"))?,
            &format!("layers[{i}].bias"),
        )?;
        let activation = match layer.get("activation").and_then(Value::as_str) {
            Some("identity") => LayerActivation::Identity,
            Some("relu") => LayerActivation::Relu,
            Some("sigmoid") => LayerActivation::Sigmoid,
            Some(other) => {
                return Err(Error::schema(
                    format!("layers[{i}].activation"),
                    format!("unknown tag \"{other}\""),
                ))
            }
            None => {
                return Err(Error::schema(
                    format!("layers[{i}].activation"),
                    "expected a string tag",
                ))
            }
        };
        layers.push(DenseLayer {
            weights,
            bias,
            activation,
        });
    }
    DenseNetwork::new(n, layers)
}

fn parse_ball(value: &Value) -> Result<BallClassifier> {
    let center = parse_f64_array(
        value
            .get("center")
            .ok_or_else(|| Error::schema("center", "missing field"))?,
        "center",
    )?;
    let radius = field_f64(
        value
            .get("radius")
            .ok_or_else(|| Error::schema("radius", "missing field"))?,
        "radius",
    )?;
    let center = Point::new(center).map_err(|e| Error::schema("center", e.to_string()))?;
    let region = BallSpec::inside_unit_ball(center, radius)
        .map_err(|e| Error::schema("radius", e.to_string()))?;
    BallClassifier::new(region, Label::new("inside"), Label::new("outside"))
}

/// Load a classifier from a model file. Dense networks carry a `layers`
/// field; ball classifiers carry `center`/`radius`.
pub fn load_model(path: &Path) -> Result<ClassifierMap> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if value.get("layers").is_some() {
        Ok(ClassifierMap::Dense(parse_dense(&value)?))
    } else if value.get("center").is_some() {
        Ok(ClassifierMap::Ball(parse_ball(&value)?))
    } else {
        Err(Error::schema(
            "$",
            "expected a model object with \"layers\" or \"center\"",
        ))
    }
}

/// Write a model file that `load_model` reads back to an identically
/// evaluating map. Attacked maps have no file form.
pub fn save_model(map: &ClassifierMap, path: &Path) -> Result<()> {
    let value = match map {
        ClassifierMap::Dense(net) => json!({
            "n": net.input_dim,
            "layers": net.layers.iter().map(|layer| json!({
                "weights": layer.weights,
                "bias": layer.bias,
                "activation": match layer.activation {
                    LayerActivation::Identity => "identity",
                    LayerActivation::Relu => "relu",
                    LayerActivation::Sigmoid => "sigmoid",
                },
            })).collect::<Vec<_>>(),
        }),
        ClassifierMap::Ball(ball) => json!({
            "center": ball.region.center().coords(),
            "radius": ball.region.radius(),
        }),
        ClassifierMap::Attacked { .. } => {
            return Err(Error::invalid(
                "model",
                "attacked maps are composites; save the base model and the attack parameters separately",
            ))
        }
    };
    let mut text = serde_json::to_string_pretty(&value).expect("model serialization");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::trial_rng;

    fn pt(coords: &[f64]) -> Point {
        Point::new(coords.to_vec()).unwrap()
    }

    fn ball_classifier(center: &[f64], radius: f64) -> ClassifierMap {
        let region = BallSpec::inside_unit_ball(pt(center), radius).unwrap();
        ClassifierMap::Ball(
            BallClassifier::new(region, Label::new("inside"), Label::new("outside")).unwrap(),
        )
    }

    #[test]
    fn ball_classifier_scores() {
        let f = ball_classifier(&[0.0, 0.0], 0.5);
        assert_eq!(f.evaluate(&pt(&[0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(f.evaluate(&pt(&[0.9, 0.0])).unwrap(), -1.0);
        assert_eq!(
            f.classify(&pt(&[0.0, 0.0]), 0.0).unwrap().as_str(),
            "inside"
        );
        assert_eq!(
            f.classify(&pt(&[0.9, 0.0]), 0.0).unwrap().as_str(),
            "outside"
        );
    }

    #[test]
    fn threshold_ties_go_inside() {
        let f = ball_classifier(&[0.0, 0.0], 0.5);
        // score is exactly +1 at the center; threshold exactly at the score
        assert_eq!(
            f.classify(&pt(&[0.0, 0.0]), 1.0).unwrap().as_str(),
            "inside"
        );
    }

    #[test]
    fn classify_is_invariant_under_positive_rescaling() {
        // sign thresholding at 0 only looks at the sign of the score
        let w = vec![0.4, -0.7];
        let f1 = ClassifierMap::Dense(DenseNetwork::affine(w.clone(), 0.1).unwrap());
        let f3 = ClassifierMap::Dense(
            DenseNetwork::affine(w.iter().map(|v| v * 3.0).collect(), 0.3).unwrap(),
        );
        let mut rng = trial_rng(5, 0);
        for _ in 0..200 {
            let x =
                crate::geometry::sample_uniform_ball(2, 1.0, &pt(&[0.0, 0.0]), &mut rng).unwrap();
            assert_eq!(f1.classify(&x, 0.0).unwrap(), f3.classify(&x, 0.0).unwrap());
        }
    }

    #[test]
    fn affine_layer_evaluates_by_hand() {
        let f = ClassifierMap::Dense(DenseNetwork::affine(vec![1.0, 0.0], -0.5).unwrap());
        let y = f.evaluate(&pt(&[0.8, 0.0])).unwrap();
        assert!((y - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_inputs_outside_the_unit_ball() {
        let f = ClassifierMap::Dense(DenseNetwork::affine(vec![1.0, 1.0], 0.0).unwrap());
        assert!(matches!(
            f.evaluate(&pt(&[1.0, 1.0])),
            Err(Error::OutsideUnitBall { .. })
        ));
    }

    #[test]
    fn overflowing_forward_pass_is_an_error_not_a_nan() {
        let f = ClassifierMap::Dense(DenseNetwork::affine(vec![1e308], 1e308).unwrap());
        assert!(matches!(
            f.evaluate(&pt(&[0.9])),
            Err(Error::NonFinite { .. })
        ));
    }

    /// Straight-line interpreted forward pass, independent of the
    /// implementation path. Index arithmetic is spelled out on purpose.
    #[allow(clippy::needless_range_loop)]
    fn oracle_forward(net: &DenseNetwork, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        for layer in net.layers() {
            let rows = layer.weights.len();
            let cols = layer.weights[0].len();
            let mut out = vec![0.0; rows];
            for r in 0..rows {
                let mut s = 0.0;
                for c in 0..cols {
                    s += layer.weights[r][c] * cur[c];
                }
                s += layer.bias[r];
                out[r] = match layer.activation {
                    LayerActivation::Identity => s,
                    LayerActivation::Relu => {
                        if s > 0.0 {
                            s
                        } else {
                            0.0
                        }
                    }
                    LayerActivation::Sigmoid => 1.0 / (1.0 + (-s).exp()),
                };
            }
            cur = out;
        }
        cur[0]
    }

    #[test]
    fn dense_forward_matches_interpreter_oracle() {
        let mut rng = trial_rng(11, 0);
        for _ in 0..50 {
            let n = 1 + (rng.random::<f64>() * 6.0) as usize;
            let hidden = [1 + (rng.random::<f64>() * 4.0) as usize];
            let net = DenseNetwork::random(n, &hidden, &mut rng).unwrap();
            let x =
                crate::geometry::sample_uniform_ball(n, 1.0, &Point::origin(n).unwrap(), &mut rng)
                    .unwrap();
            let got = ClassifierMap::Dense(net.clone()).evaluate(&x).unwrap();
            let want = oracle_forward(&net, x.coords());
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn hand_evaluated_two_by_two_network_round_trips() {
        let dir = std::env::temp_dir().join("stealth_lab_model_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("two_layer.json");
        std::fs::write(
            &path,
            r#"{
  "n": 2,
  "layers": [
    {"weights": [[1.0, -1.0], [0.5, 0.25]], "bias": [0.0, -0.1], "activation": "relu"},
    {"weights": [[2.0, 4.0]], "bias": [0.25], "activation": "identity"}
  ]
}"#,
        )
        .unwrap();
        let f = load_model(&path).unwrap();
        // hand computation at x = (0.6, 0.2):
        //   h1 = relu(0.6 - 0.2) = 0.4, h2 = relu(0.3 + 0.05 - 0.1) = 0.25
        //   out = 2*0.4 + 4*0.25 + 0.25 = 2.05
        let y = f.evaluate(&pt(&[0.6, 0.2])).unwrap();
        assert!((y - 2.05).abs() < 1e-12);

        let copy = dir.join("two_layer_copy.json");
        save_model(&f, &copy).unwrap();
        let g = load_model(&copy).unwrap();
        let mut rng = trial_rng(3, 0);
        for _ in 0..20 {
            let x =
                crate::geometry::sample_uniform_ball(2, 1.0, &pt(&[0.0, 0.0]), &mut rng).unwrap();
            assert_eq!(f.evaluate(&x).unwrap(), g.evaluate(&x).unwrap());
        }
    }

    #[test]
    fn ball_classifier_file_round_trips() {
        let dir = std::env::temp_dir().join("stealth_lab_ball_model");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ball.json");
        std::fs::write(&path, r#"{"center": [0.2, 0.0, 0.1], "radius": 0.4}"#).unwrap();
        let f = load_model(&path).unwrap();
        assert_eq!(f.evaluate(&pt(&[0.2, 0.0, 0.1])).unwrap(), 1.0);
        assert_eq!(f.evaluate(&pt(&[0.9, 0.0, 0.0])).unwrap(), -1.0);

        let copy = dir.join("ball_copy.json");
        save_model(&f, &copy).unwrap();
        let g = load_model(&copy).unwrap();
        assert_eq!(
            f.evaluate(&pt(&[0.5, 0.1, 0.1])).unwrap(),
            g.evaluate(&pt(&[0.5, 0.1, 0.1])).unwrap()
        );

        // region escaping the unit ball is rejected with the field name
        let bad = dir.join("bad_ball.json");
        std::fs::write(&bad, r#"{"center": [0.8, 0.0, 0.0], "radius": 0.4}"#).unwrap();
        let err = load_model(&bad).unwrap_err().to_string();
        assert!(err.contains("radius"), "{err}");
    }

    #[test]
    fn model_loader_reports_field_paths() {
        let dir = std::env::temp_dir().join("stealth_lab_model_errors");
        std::fs::create_dir_all(&dir).unwrap();

        let mismatched = dir.join("mismatched.json");
        std::fs::write(
            &mismatched,
            r#"{"n": 2, "layers": [
                {"weights": [[1.0, 0.0]], "bias": [0.0], "activation": "identity"},
                {"weights": [[1.0, 2.0]], "bias": [0.0], "activation": "identity"}
            ]}"#,
        )
        .unwrap();
        let err = load_model(&mismatched).unwrap_err().to_string();
        assert!(err.contains("layers[1]"), "error was: {err}");

        let empty = dir.join("empty.json");
        std::fs::write(&empty, r#"{"n": 2, "layers": []}"#).unwrap();
        let err = load_model(&empty).unwrap_err().to_string();
        assert!(err.contains("layers"), "error was: {err}");

        let unknown = dir.join("unknown.json");
        std::fs::write(
            &unknown,
            r#"{"n": 1, "layers": [{"weights": [[1.0]], "bias": [0.0], "activation": "tanh"}]}"#,
        )
        .unwrap();
        let err = load_model(&unknown).unwrap_err().to_string();
        assert!(
            err.contains("activation") && err.contains("tanh"),
            "error was: {err}"
        );
    }

    #[test]
    fn boundary_points_have_opposite_labels_just_outside() {
        // reach condition for the ball classifier, tested analytically:
        // step outward from any boundary point by any positive distance
        // that stays inside the unit ball and the label flips
        let center = pt(&[0.2, 0.0, 0.1]);
        let radius = 0.4;
        let f = ball_classifier(&[0.2, 0.0, 0.1], radius);
        let mut rng = trial_rng(21, 0);
        for _ in 0..500 {
            // a draw on the sphere can round a hair outside the closed
            // ball; pull it back one part in 1e14 so x itself is class A
            let raw = crate::geometry::sample_uniform_sphere(3, radius, &center, &mut rng).unwrap();
            let x = center
                .add(&raw.sub(&center).unwrap().scale(1.0 - 1e-14))
                .unwrap();
            let inside_label = f.classify(&x, 0.0).unwrap();
            assert_eq!(inside_label.as_str(), "inside");
            for delta in [1e-9f64, 1e-3, 0.2] {
                let slack = 1.0 - x.norm();
                let step = delta.min(slack * 0.5);
                if step <= 0.0 {
                    continue;
                }
                let dir = x.sub(&center).unwrap();
                let y = x.add(&dir.scale(step / dir.norm())).unwrap();
                assert_eq!(f.classify(&y, 0.0).unwrap().as_str(), "outside");
            }
        }
    }

    #[test]
    fn lipschitz_of_affine_map_is_bounded_by_weight_norm() {
        let w = vec![0.3, -0.4];
        let f = ClassifierMap::Dense(DenseNetwork::affine(w.clone(), 0.2).unwrap());
        let norm_w = (w.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut rng = trial_rng(8, 0);
        let origin = pt(&[0.0, 0.0]);
        let pairs: Vec<(Point, Point)> = (0..100)
            .map(|_| {
                (
                    crate::geometry::sample_uniform_ball(2, 1.0, &origin, &mut rng).unwrap(),
                    crate::geometry::sample_uniform_ball(2, 1.0, &origin, &mut rng).unwrap(),
                )
            })
            .collect();
        let lip = f.empirical_lipschitz(&pairs).unwrap();
        assert!(lip <= norm_w + 1e-12);
    }

    #[test]
    fn lipschitz_skips_coincident_pairs_and_rejects_empty() {
        let f = ClassifierMap::Dense(DenseNetwork::affine(vec![1.0], 0.0).unwrap());
        let x = pt(&[0.5]);
        let pairs = vec![(x.clone(), x.clone())];
        assert!(matches!(
            f.empirical_lipschitz(&pairs),
            Err(Error::EmptySample)
        ));
        let pairs = vec![(x.clone(), x.clone()), (pt(&[0.1]), pt(&[0.6]))];
        assert!((f.empirical_lipschitz(&pairs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_map_has_zero_lipschitz() {
        let f = ClassifierMap::Dense(DenseNetwork::affine(vec![0.0, 0.0], 0.7).unwrap());
        let pairs = vec![(pt(&[0.1, 0.0]), pt(&[0.0, 0.4]))];
        assert_eq!(f.empirical_lipschitz(&pairs).unwrap(), 0.0);
    }
}
