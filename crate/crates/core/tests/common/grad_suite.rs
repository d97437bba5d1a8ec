//! Finite-difference checks shared by the gradient tests and the acceptance run.

use synthdefect::nn::gradcheck::{analytic_gradients, compare_gradients, input_grad_check};
use synthdefect::nn::{
    grad_check, loss_bce, loss_dice, loss_l1, loss_mse, GradCheckOptions, GradCheckReport, Layer, LayerKind, LossGrad,
    Model, Sequential, Tensor, UNet, UNetConfig,
};
use synthdefect::segnet::{combined_loss, LossMix};
use synthdefect::translator::{TranslatorConfig, TranslatorModel};
use synthdefect::wgan::{WganConfig, WganModel};
use synthdefect::{Result, SeededRng};

pub const TOL: f64 = 1e-4;

pub fn opts() -> GradCheckOptions {
    GradCheckOptions {
        coordinates: 48,
        ..GradCheckOptions::default()
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi))
}

fn binary(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    Tensor::from_fn(shape, |_| rng.bernoulli(0.3) as u8 as f64)
}

fn mse_to(target: Tensor) -> impl Fn(&Tensor) -> Result<LossGrad> {
    move |y: &Tensor| loss_mse(y, &target)
}

/// `mean(scores)`, the quantity the critic and generator ascend.
fn mean_score(y: &Tensor) -> Result<LossGrad> {
    let n = y.len() as f64;
    Ok(LossGrad {
        value: y.mean(),
        grad: Tensor::filled(y.shape(), 1.0 / n),
    })
}

/// One named check: worst relative error over parameters and input.
pub struct Case {
    pub name: String,
    pub param_error: f64,
    pub input_error: f64,
}

impl Case {
    pub fn worst(&self) -> f64 {
        self.param_error.max(self.input_error)
    }
}

fn check<M: Model>(name: &str, model: &mut M, x: &Tensor, loss: impl Fn(&Tensor) -> Result<LossGrad>) -> Case {
    let mut rng = SeededRng::new(99);
    let report = grad_check(model, x, &loss, opts(), &mut rng).unwrap();
    let input_error = input_grad_check(model, x, &loss, opts(), &mut rng).unwrap();
    Case {
        name: name.to_string(),
        param_error: report.max_relative_error,
        input_error,
    }
}

pub fn linear_mse() -> GradCheckReport {
    let mut rng = SeededRng::new(1);
    let mut net = Sequential::new(vec![Layer::dense(5, 4, &mut rng), Layer::dense(4, 3, &mut rng)]);
    let x = uniform(&[2, 5], -1.0, 1.0, 2);
    grad_check(&mut net, &x, mse_to(uniform(&[2, 3], -1.0, 1.0, 3)), opts(), &mut rng).unwrap()
}

pub fn conv_bce() -> Case {
    let mut rng = SeededRng::new(4);
    let mut net = Sequential::new(vec![
        Layer::conv(1, 3, 3, 1, 1, &mut rng),
        Layer::activation(LayerKind::LeakyRelu { slope: 0.2 }),
        Layer::conv(3, 1, 4, 2, 1, &mut rng),
        Layer::activation(LayerKind::Sigmoid),
    ]);
    let x = uniform(&[2, 1, 6, 6], -1.0, 1.0, 5);
    let t = binary(&[2, 1, 3, 3], 6);
    check("conv + bce", &mut net, &x, |y: &Tensor| loss_bce(y, &t))
}

pub fn layer_kinds() -> Vec<Case> {
    let mut rng = SeededRng::new(7);
    let cases: Vec<(&str, Vec<Layer>, Vec<usize>)> = vec![
        ("dense", vec![Layer::dense(5, 3, &mut rng)], vec![2, 5]),
        ("conv s1", vec![Layer::conv(2, 3, 3, 1, 1, &mut rng)], vec![2, 2, 5, 5]),
        ("conv s2", vec![Layer::conv(2, 2, 4, 2, 1, &mut rng)], vec![1, 2, 6, 6]),
        (
            "tconv s2",
            vec![Layer::tconv(2, 3, 4, 2, 1, &mut rng)],
            vec![1, 2, 3, 3],
        ),
        (
            "tconv s1",
            vec![Layer::tconv(2, 2, 3, 1, 1, &mut rng)],
            vec![2, 2, 4, 4],
        ),
        (
            "relu",
            vec![Layer::dense(5, 6, &mut rng), Layer::activation(LayerKind::Relu)],
            vec![2, 5],
        ),
        (
            "leaky relu",
            vec![
                Layer::dense(5, 6, &mut rng),
                Layer::activation(LayerKind::LeakyRelu { slope: 0.2 }),
            ],
            vec![2, 5],
        ),
        (
            "sigmoid",
            vec![Layer::dense(5, 6, &mut rng), Layer::activation(LayerKind::Sigmoid)],
            vec![2, 5],
        ),
        (
            "tanh",
            vec![Layer::dense(5, 6, &mut rng), Layer::activation(LayerKind::Tanh)],
            vec![2, 5],
        ),
        (
            "reshape",
            vec![
                Layer::dense(4, 8, &mut rng),
                Layer::activation(LayerKind::Reshape { shape: vec![2, 2, 2] }),
                Layer::conv(2, 1, 3, 1, 1, &mut rng),
            ],
            vec![3, 4],
        ),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (name, layers, shape))| {
            let mut net = Sequential::new(layers);
            let x = uniform(&shape, -1.0, 1.0, 100 + i as u64);
            let target = uniform(&net.output_shape(&shape).unwrap(), -1.0, 1.0, 200 + i as u64);
            check(name, &mut net, &x, mse_to(target))
        })
        .collect()
}

pub fn losses() -> Vec<Case> {
    let mut rng = SeededRng::new(8);
    let mut probs = Sequential::new(vec![
        Layer::dense(5, 6, &mut rng),
        Layer::activation(LayerKind::Sigmoid),
    ]);
    let x = uniform(&[2, 5], -1.0, 1.0, 9);
    let t = binary(&[2, 6], 10);
    let real = uniform(&[2, 6], 0.0, 1.0, 11);
    let mut critic = Sequential::new(vec![Layer::dense(5, 1, &mut rng)]);
    vec![
        check("bce", &mut probs, &x, |y: &Tensor| loss_bce(y, &t)),
        check("dice", &mut probs, &x, |y: &Tensor| loss_dice(y, &t, 1.0)),
        check("bce + dice", &mut probs, &x, |y: &Tensor| {
            combined_loss(y, &t, LossMix::default(), 1.0)
        }),
        check("l1", &mut probs, &x, |y: &Tensor| loss_l1(y, &real)),
        check("mse", &mut probs, &x, |y: &Tensor| loss_mse(y, &real)),
        check("wasserstein score", &mut critic, &x, mean_score),
    ]
}

pub fn wgan_networks() -> Vec<Case> {
    let cfg = WganConfig {
        latent_dim: 6,
        mask_size: 16,
        base_channels: 2,
        ..WganConfig::default()
    };
    let model = WganModel::new(cfg, &SeededRng::new(12)).unwrap();
    let mut generator = model.generator().clone();
    let z = uniform(&[2, 6], -1.0, 1.0, 13);
    let gen = check("wgan generator", &mut generator, &z, mean_score);

    // Checked at unclipped scale so gradients sit well above the error floor.
    let mut rng = SeededRng::new(14);
    let mut critic = model.critic().clone();
    for p in critic.params_mut() {
        for v in p.value.data_mut() {
            *v = rng.uniform_range(-0.5, 0.5);
        }
    }
    let masks = binary(&[2, 1, 16, 16], 15);
    vec![gen, check("wgan critic", &mut critic, &masks, mean_score)]
}

pub fn translator_networks() -> Vec<Case> {
    let cfg = TranslatorConfig {
        image_size: 8,
        base_channels: 2,
        critic_channels: 2,
        ..TranslatorConfig::default()
    };
    let model = TranslatorModel::new(cfg, &SeededRng::new(16)).unwrap();
    let mut generator = model.generator().clone();
    // Continuous input keeps pre-activations off the LeakyReLU kink.
    let m = uniform(&[1, 1, 8, 8], 0.05, 0.95, 17);
    let real = uniform(&[1, 1, 8, 8], 0.0, 1.0, 18);
    let gen = check("translator generator + l1", &mut generator, &m, |y: &Tensor| {
        loss_l1(y, &real)
    });

    let mut critic = model.critic().clone();
    let pair = uniform(&[1, 2, 8, 8], 0.0, 1.0, 19);
    let ones = Tensor::filled(&critic.output_shape(&[1, 2, 8, 8]).unwrap(), 1.0);
    vec![
        gen,
        check("patch critic + least squares", &mut critic, &pair, |y: &Tensor| {
            loss_mse(y, &ones)
        }),
    ]
}

pub fn segmenter_network() -> Case {
    let mut rng = SeededRng::new(20);
    let mut net = UNet::new(
        UNetConfig {
            in_channels: 1,
            out_channels: 1,
            base_channels: 2,
        },
        &mut rng,
    );
    let x = uniform(&[2, 1, 8, 8], 0.0, 1.0, 21);
    let t = binary(&[2, 1, 8, 8], 22);
    check("segmenter unet + bce/dice", &mut net, &x, |y: &Tensor| {
        combined_loss(y, &t, LossMix::default(), 1.0)
    })
}

/// Errors of the true gradients and of the same gradients scaled by 1.01.
pub fn corrupted() -> (f64, f64) {
    let mut rng = SeededRng::new(23);
    let mut net = Sequential::new(vec![
        Layer::conv(1, 2, 3, 1, 1, &mut rng),
        Layer::activation(LayerKind::Tanh),
        Layer::conv(2, 1, 3, 1, 1, &mut rng),
        Layer::activation(LayerKind::Sigmoid),
    ]);
    let x = uniform(&[1, 1, 5, 5], -1.0, 1.0, 24);
    let t = binary(&[1, 1, 5, 5], 25);
    let loss = |y: &Tensor| loss_bce(y, &t);
    let mut grads = analytic_gradients(&mut net, &x, &loss).unwrap();
    let clean = compare_gradients(&mut net, &x, &loss, &grads, opts(), &mut SeededRng::new(1)).unwrap();
    for g in &mut grads {
        g.scale(1.01);
    }
    let bad = compare_gradients(&mut net, &x, &loss, &grads, opts(), &mut SeededRng::new(1)).unwrap();
    (clean.max_relative_error, bad.max_relative_error)
}

/// Every case the networks rely on.
pub fn all_cases() -> Vec<Case> {
    let mut out = vec![conv_bce()];
    out.extend(layer_kinds());
    out.extend(losses());
    out.extend(wgan_networks());
    out.extend(translator_networks());
    out.push(segmenter_network());
    out
}
