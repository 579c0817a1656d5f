//! Finite-difference checks of every differentiable operation and of the
//! three full models on toy sizes.

use numcore::{grad_check, DctBasis64, GradCheckReport, Graph64, NumError, Tensor64, Unary, Var};
use rand::Rng as _;
use serde::Serialize;

use crate::cmlpe::{motion_loss, CmlpeConfig, CmlpeModel};
use crate::error::{Error, Result};
use crate::posedata::FEATURES;
use crate::recognizers::{classify_loss, Classifier, MambaSlConfig, ModelConfig, TransformerSlConfig};
use crate::rng::{derive_seed, seeded, Rng};

pub const SELFTEST_TOLERANCE: f64 = 1e-3;
const STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfTestCase {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

type NumResult<T> = std::result::Result<T, NumError>;
type Body = Box<dyn Fn(&mut Graph64, &[Var]) -> NumResult<Var>>;

fn rand_t(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor64 {
    Tensor64::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// `Σ w ⊙ y` with fixed random weights, so every output element matters.
fn probe(g: &mut Graph64, y: Var, seed: u64) -> NumResult<Var> {
    let mut rng = seeded(seed);
    let w = rand_t(&mut rng, g.shape(y), -1.0, 1.0);
    let w = g.constant(w);
    let prod = g.mul(y, w)?;
    Ok(g.sum(prod))
}

struct OpCase {
    name: &'static str,
    inputs: Vec<Tensor64>,
    body: Body,
}

fn op(name: &'static str, inputs: Vec<Tensor64>, f: impl Fn(&mut Graph64, &[Var]) -> NumResult<Var> + 'static) -> OpCase {
    OpCase { name, inputs, body: Box::new(move |g, v| f(g, v).and_then(|y| probe(g, y, 99))) }
}

fn op_cases(rng: &mut Rng) -> Vec<OpCase> {
    let mut r = |s: &[usize]| rand_t(rng, s, -1.0, 1.0);
    let unary = |u: Unary| move |g: &mut Graph64, v: &[Var]| Ok(g.unary(v[0], u));
    let positive = Tensor64::from_fn([2, 3], |i| 0.5 + 0.15 * i as f64);
    let (delta, a_neg) = (
        Tensor64::from_fn([1, 4, 2], |i| 0.1 + 0.1 * i as f64),
        Tensor64::from_fn([2, 3], |i| -0.2 - 0.3 * i as f64),
    );
    vec![
        op("add", vec![r(&[2, 3]), r(&[3])], |g, v| g.add(v[0], v[1])),
        op("sub", vec![r(&[2, 1, 3]), r(&[4, 1])], |g, v| g.sub(v[0], v[1])),
        op("mul", vec![r(&[2, 3]), r(&[2, 1])], |g, v| g.mul(v[0], v[1])),
        op("div", vec![r(&[2, 3]), positive], |g, v| g.div(v[0], v[1])),
        op("scale-neg-shift", vec![r(&[5])], |g, v| {
            let s = g.scale(v[0], 1.7);
            let n = g.neg(s);
            Ok(g.add_scalar(n, 0.3))
        }),
        op("exp", vec![r(&[4])], unary(Unary::Exp)),
        op("gelu", vec![r(&[4])], unary(Unary::Gelu)),
        op("silu", vec![r(&[4])], unary(Unary::Silu)),
        op("softplus", vec![r(&[4])], unary(Unary::Softplus)),
        op("sigmoid", vec![r(&[4])], unary(Unary::Sigmoid)),
        op("tanh", vec![r(&[4])], unary(Unary::Tanh)),
        op("square", vec![r(&[4])], unary(Unary::Square)),
        op("matmul-shared", vec![r(&[2, 3, 4]), r(&[4, 2])], |g, v| g.matmul(v[0], v[1])),
        op("matmul-batched", vec![r(&[2, 3, 4]), r(&[2, 4, 2])], |g, v| g.matmul(v[0], v[1])),
        op("linear", vec![r(&[3, 4]), r(&[4, 2]), r(&[2])], |g, v| g.linear(v[0], v[1], v[2])),
        op("permute", vec![r(&[2, 3, 4])], |g, v| g.permute(v[0], &[2, 0, 1])),
        op("transpose", vec![r(&[2, 3, 4])], |g, v| g.transpose(v[0])),
        op("reshape", vec![r(&[2, 6])], |g, v| g.reshape(v[0], &[3, 4])),
        op("narrow", vec![r(&[3, 5])], |g, v| g.narrow(v[0], 1, 1, 3)),
        op("concat", vec![r(&[2, 2]), r(&[2, 3])], |g, v| g.concat(&[v[0], v[1]], 1)),
        op("select-rows", vec![r(&[4, 3])], |g, v| g.select_rows(v[0], &[2, 0, 2])),
        op("gather-tokens", vec![r(&[2, 4, 3])], |g, v| g.gather_tokens(v[0], &[3, 1])),
        op("sum", vec![r(&[3, 2])], |g, v| {
            let sq = g.unary(v[0], Unary::Square);
            Ok(g.sum(sq))
        }),
        op("mean", vec![r(&[3, 2])], |g, v| {
            let sq = g.unary(v[0], Unary::Square);
            Ok(g.mean(sq))
        }),
        op("layer-norm", vec![r(&[2, 3, 4]), r(&[3]), r(&[3])], |g, v| g.layer_norm(v[0], v[1], v[2], 1, 1e-5)),
        op("softmax", vec![r(&[2, 5])], |g, v| g.softmax(v[0])),
        op("norm-last", vec![r(&[3, 4])], |g, v| g.norm_last(v[0])),
        op("cross-entropy", vec![r(&[3, 4])], |g, v| g.cross_entropy(v[0], &[1, 3, 0])),
        op("causal-conv1d", vec![r(&[2, 5, 3]), r(&[3, 4]), r(&[3])], |g, v| g.causal_conv1d(v[0], v[1], v[2])),
        op(
            "selective-scan",
            vec![r(&[1, 4, 2]), delta, a_neg, r(&[1, 4, 3]), r(&[1, 4, 3]), r(&[2])],
            |g, v| g.selective_scan(v[0], v[1], v[2], v[3], v[4], v[5]),
        ),
        op("dct", vec![r(&[2, 8, 3])], |g, v| DctBasis64::new(8)?.dct(g, v[0])),
        op("idct", vec![r(&[8, 3])], |g, v| DctBasis64::new(8)?.idct(g, v[0])),
    ]
}

fn case(name: &str, report: GradCheckReport<f64>) -> SelfTestCase {
    SelfTestCase {
        name: name.to_string(),
        max_rel_error: report.max_rel_error,
        checked: report.checked,
        passed: report.max_rel_error < SELFTEST_TOLERANCE,
    }
}

fn jitter(store: &mut crate::params::ParamStore, rng: &mut Rng, amount: f64) {
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-amount..amount));
    }
}

fn cmlpe_case(seed: u64) -> Result<SelfTestCase> {
    let cfg = CmlpeConfig {
        num_blocks: 2,
        embed_dim: 4,
        input_frames: 2,
        target_frames: 2,
        features: 6,
        num_classes: 3,
        ..Default::default()
    };
    let mut model = CmlpeModel::new(cfg, seed)?;
    let mut rng = seeded(derive_seed(seed, 1));
    jitter(model.params_mut(), &mut rng, 0.3);
    let x = rand_t(&mut rng, &[2, 2, 6], -1.0, 1.0);
    let y = rand_t(&mut rng, &[2, 2, 6], -1.0, 1.0);
    let noise = rand_t(&mut rng, &[2, 4], -0.1, 0.1);
    let params = model.params().tensors().to_vec();
    let report = grad_check(
        |g: &mut Graph64, p| {
            let xv = g.constant(x.clone());
            let yv = g.constant(y.clone());
            let pred = model.graph_forward(g, p, xv, &[2, 0], &noise).map_err(Error::into_num)?;
            Ok(motion_loss(g, pred, yv).map_err(Error::into_num)?.value)
        },
        &params,
        STEP,
    )?;
    Ok(case("cmlpe (K=2, D=4)", report))
}

fn classifier_case(name: &str, config: ModelConfig, seed: u64) -> Result<SelfTestCase> {
    let mut model = Classifier::new(&config, 3, seed)?;
    let mut rng = seeded(derive_seed(seed, 2));
    jitter(model.params_mut(), &mut rng, 0.1);
    let x = rand_t(&mut rng, &[2, 3, FEATURES], -1.0, 1.0);
    let params = model.params().tensors().to_vec();
    let report = grad_check(
        |g: &mut Graph64, p| {
            let xv = g.constant(x.clone());
            let logits = model.graph_logits(g, p, xv, &[3, 2], None).map_err(Error::into_num)?;
            classify_loss(g, logits, &[1, 2]).map_err(Error::into_num)
        },
        &params,
        STEP,
    )?;
    Ok(case(name, report))
}

/// Runs every check; a case fails when its maximum relative error reaches
/// [`SELFTEST_TOLERANCE`].
pub fn run_selftest(seed: u64) -> Result<Vec<SelfTestCase>> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();
    for c in op_cases(&mut rng) {
        let report = grad_check(|g: &mut Graph64, v| (c.body)(g, v), &c.inputs, STEP)?;
        out.push(case(c.name, report));
    }
    out.push(cmlpe_case(seed)?);
    let transformer = TransformerSlConfig { layers: 2, heads: 2, hidden_dim: 8, mlp_dim: 12, output_size: 8, ..Default::default() };
    out.push(classifier_case("transformer-sl (H=8)", ModelConfig::TransformerSl(transformer), seed)?);
    let mamba = MambaSlConfig { layers: 2, hidden_dim: 8, state_dim: 4, output_size: 8, ..Default::default() };
    out.push(classifier_case("mamba-sl (H=8)", ModelConfig::MambaSl(mamba), seed)?);
    Ok(out)
}
