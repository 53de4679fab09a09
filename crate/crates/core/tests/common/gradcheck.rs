//! Central finite-difference checks of decoder gradients.

use frscatter::decoder::{DecoderModel, LayerSpec, Mode};
use frscatter::rng::SeededRng;
use frscatter::DenseTensor;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;

/// Gradients smaller than this are compared absolutely: a bias feeding a
/// batch-norm has an exactly zero gradient, and its finite difference is
/// pure round-off.
pub const ABS_FLOOR: f64 = 1e-6;

/// Scalar probe loss `Σ out · r`.
fn probe_loss(model: &mut DecoderModel, x: &DenseTensor<f64>, r: &DenseTensor<f64>) -> f64 {
    let out = model.forward(x, Mode::Train).unwrap();
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, ABS_FLOOR)` over the probed entries.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / (na + nn).max(ABS_FLOOR)
}

/// Central difference of the probe loss along one coordinate.
fn central(
    model: &mut DecoderModel,
    x: &DenseTensor<f64>,
    r: &DenseTensor<f64>,
    set: &mut dyn FnMut(&mut DecoderModel, &mut DenseTensor<f64>, f64),
) -> f64 {
    let mut xp = x.clone();
    set(model, &mut xp, STEP);
    let up = probe_loss(model, &xp, r);
    let mut xm = x.clone();
    set(model, &mut xm, -STEP);
    let down = probe_loss(model, &xm, r);
    set(model, &mut xm, 0.0);
    (up - down) / (2.0 * STEP)
}

/// Checks up to `probes` entries of every parameter tensor and of the input.
/// Returns the worst relative error over all probed tensors.
///
/// Relu units are frozen to their on/off state at the base point while
/// differencing: the network is piecewise smooth and with thousands of units
/// almost every `±STEP` perturbation crosses some kink. The frozen network
/// agrees with the real one at the base point and has the same derivative
/// there, which is what the analytic gradient claims.
pub fn check_model(model: &mut DecoderModel, x: &DenseTensor<f64>, probes: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = x.shape()[0];
    let mut out_shape = vec![n];
    out_shape.extend_from_slice(model.output_shape());
    let r = DenseTensor::from_fn(out_shape.clone(), |_| rng.uniform_in(-1.0, 1.0));

    model.forward(x, Mode::Train).unwrap();
    let base = model.relu_pattern();
    let dx = model.backward(&r).unwrap();
    let grads: Vec<Vec<Vec<f64>>> = model.grads().to_vec();
    model.freeze_relu(Some(base));

    let mut worst: f64 = 0.0;
    for layer in 0..grads.len() {
        for t in 0..grads[layer].len() {
            let len = grads[layer][t].len();
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for _ in 0..probes.min(len) {
                let i = (rng.next_u64() as usize) % len;
                let orig = model.params()[layer][t][i];
                let mut set = |m: &mut DecoderModel, _: &mut DenseTensor<f64>, h: f64| {
                    m.params_mut()[layer][t][i] = orig + h;
                };
                numeric.push(central(model, x, &r, &mut set));
                analytic.push(grads[layer][t][i]);
            }
            let e = relative_error(&analytic, &numeric);
            if std::env::var_os("GRADCHECK_DEBUG").is_some() {
                eprintln!("layer {layer} tensor {t}: {e:e}");
            }
            worst = worst.max(e);
        }
    }
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for _ in 0..probes.min(x.len()) {
        let i = (rng.next_u64() as usize) % x.len();
        let orig = x.data()[i];
        let mut set = |_: &mut DecoderModel, xp: &mut DenseTensor<f64>, h: f64| {
            xp.data_mut()[i] = orig + h;
        };
        numeric.push(central(model, x, &r, &mut set));
        analytic.push(dx.data()[i]);
    }
    model.freeze_relu(None);
    worst.max(relative_error(&analytic, &numeric))
}

/// A minimal model exercising one layer kind, with its probe input.
pub fn single_layer_case(kind: &str, seed: u64) -> (DecoderModel, DenseTensor<f64>) {
    let mut rng = SeededRng::new(seed);
    let (layers, sample): (Vec<LayerSpec>, Vec<usize>) = match kind {
        "fully_connected" => (
            vec![LayerSpec::FullyConnected { inputs: 6, channels: 1, side: 3 }, LayerSpec::Tanh],
            vec![6],
        ),
        "fully_conv" => (
            vec![LayerSpec::FullyConv { in_channels: 3, out_channels: 1 }, LayerSpec::Tanh],
            vec![3, 4, 4],
        ),
        "conv3x3" => (
            vec![LayerSpec::Conv3x3 { in_channels: 2, out_channels: 1 }, LayerSpec::Tanh],
            vec![2, 5, 4],
        ),
        "conv7x7" => (
            vec![LayerSpec::Conv7x7 { in_channels: 2, out_channels: 1 }, LayerSpec::Tanh],
            vec![2, 6, 5],
        ),
        "bilinear_upsample_x2" => (
            vec![
                LayerSpec::BilinearUpsampleX2,
                LayerSpec::FullyConv { in_channels: 2, out_channels: 1 },
                LayerSpec::Tanh,
            ],
            vec![2, 3, 4],
        ),
        "batch_norm" => (
            vec![
                LayerSpec::BatchNorm { channels: 3 },
                LayerSpec::FullyConv { in_channels: 3, out_channels: 1 },
                LayerSpec::Tanh,
            ],
            vec![3, 3, 3],
        ),
        "relu" => (
            vec![
                LayerSpec::FullyConv { in_channels: 2, out_channels: 2 },
                LayerSpec::Relu,
                LayerSpec::FullyConv { in_channels: 2, out_channels: 1 },
                LayerSpec::Tanh,
            ],
            vec![2, 4, 4],
        ),
        "tanh" => (vec![LayerSpec::Tanh], vec![1, 4, 4]),
        other => panic!("unknown layer kind {other}"),
    };
    let mut model = DecoderModel::new(layers, sample.clone(), &mut rng).unwrap();
    // Non-trivial batch-norm affine parameters.
    for (spec, p) in model.layers().to_vec().iter().zip(model.params_mut()) {
        if let LayerSpec::BatchNorm { .. } = spec {
            for v in p.iter_mut().flatten() {
                *v += rng.uniform_in(-0.5, 0.5);
            }
        }
    }
    let mut shape = vec![3];
    shape.extend(sample);
    let x = DenseTensor::from_fn(shape, |_| rng.uniform_in(-1.0, 1.0));
    (model, x)
}

pub const LAYER_KINDS: [&str; 8] = [
    "fully_connected",
    "fully_conv",
    "conv3x3",
    "conv7x7",
    "bilinear_upsample_x2",
    "batch_norm",
    "relu",
    "tanh",
];
