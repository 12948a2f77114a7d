use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tse_core::config::ExperimentConfig;
use tse_core::datagen::{write_pgm, Frame, MnistDataset};
use tse_core::eval::fit_affine_readout;
use tse_core::experiments::{clock_report, dump_weights, mnist_report, write_clock_report};
use tse_core::network::init_params;
use tse_core::objective::ObjectiveConfig;
use tse_core::Matrix;

fn small_clock() -> ExperimentConfig {
    let mut c = ExperimentConfig::clock_default();
    c.input_side = 16;
    c.layers = vec![12, 8];
    c.objective = ObjectiveConfig::doubling(2);
    c.eval_movie_frames = 1200;
    c.eval_readout_frames = 40;
    c.eval_readout_min_gap = 25;
    c
}

#[test]
fn untrained_network_has_no_readout_advantage() {
    let config = small_clock();
    let params = init_params(config.input_dim(), &config.layer_specs(), 9).unwrap();
    let r = clock_report(&params, &config).unwrap();
    let tse = r.rms("tse").unwrap();
    for m in ["pca", "downsample"] {
        assert!(
            tse > r.rms(m).unwrap() - 0.1,
            "{m}: {} vs tse {tse}",
            r.rms(m).unwrap()
        );
    }
    // a random network on an unseen movie sits near the constant predictor
    assert!(tse > 0.5 && tse < 1.0, "{tse}");
    assert_eq!(r.volatility.len(), 3);
    assert_eq!(r.traces.len(), 3 * 2);
    assert_eq!(r.labelled_frames.len(), 40);
}

#[test]
fn clock_report_is_deterministic_and_written() {
    let config = small_clock();
    let params = init_params(config.input_dim(), &config.layer_specs(), 1).unwrap();
    let a = clock_report(&params, &config).unwrap();
    let b = tse_core::exec::sequential(|| clock_report(&params, &config).unwrap());
    assert_eq!(a.methods.len(), b.methods.len());
    for (x, y) in a.methods.iter().zip(&b.methods) {
        assert_eq!(x.predictions, y.predictions);
    }
    let dir = tempfile::tempdir().unwrap();
    write_clock_report(&a, dir.path()).unwrap();
    let traces = std::fs::read_to_string(dir.path().join("unit_traces.csv")).unwrap();
    assert_eq!(traces.lines().count(), 1 + 1200);
    assert!(traces
        .lines()
        .next()
        .unwrap()
        .starts_with("frame,layer1_unit"));
}

#[test]
fn clock_eval_rejects_mnist_checkpoints() {
    let mut config = ExperimentConfig::mnist_default();
    config.layers = vec![4];
    config.objective = ObjectiveConfig::doubling(1);
    let params = init_params(784, &config.layer_specs(), 1).unwrap();
    assert!(clock_report(&params, &config).is_err());
}

fn blob_dataset(n: usize, seed: u64) -> MnistDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label: u8 = rng.random_range(0..4);
        for p in 0..64 {
            let quadrant = (p / 32) * 2 + (p % 8) / 4;
            let base = if quadrant == label as usize { 0.8 } else { 0.1 };
            images.push(base + rng.random_range(0.0..0.1));
        }
        labels.push(label);
    }
    MnistDataset {
        rows: 8,
        cols: 8,
        images: Matrix::from_vec(n, 64, images).unwrap(),
        labels,
    }
}

#[test]
fn mnist_sweep_uses_pool_prefixes_for_all_methods() {
    let mut config = ExperimentConfig::mnist_default();
    config.input_side = 8;
    config.layers = vec![6, 4];
    config.objective = ObjectiveConfig::doubling(2);
    config.mnist_movie_images = 30;
    config.eval_pca_components = 3;
    config.eval_sweep_sizes = vec![4, 20, 70];
    config.clip_frames = 6;
    let train = blob_dataset(100, 1);
    let test = blob_dataset(40, 2);
    let params = init_params(64, &config.layer_specs(), 3).unwrap();
    let r = mnist_report(&params, &config, &train, &test).unwrap();
    assert_eq!(r.sweeps.len(), 4);
    for (_, s) in &r.sweeps {
        assert_eq!(
            s.iter().map(|p| p.size).collect::<Vec<_>>(),
            vec![4, 20, 70]
        );
    }
    // quadrant blobs are separable in pixel space
    assert!(r.accuracy("raw", 70).unwrap() > 0.95);
    config.eval_pca_source = tse_core::config::PcaSource::Distorted;
    let d = mnist_report(&params, &config, &train, &test).unwrap();
    assert_eq!(d.accuracy("raw", 70), r.accuracy("raw", 70));
}

#[test]
fn dump_weights_normalises_each_unit() {
    let mut params = init_params(16, &[tse_core::network::LayerSpec::tanh(3)], 1).unwrap();
    for v in params.layers[0].weights.row_mut(0) {
        *v = 0.25;
    }
    let dir = tempfile::tempdir().unwrap();
    let files = dump_weights(&params, 1, 3, 7, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let header = b"P5\n4 4\n255\n";
    for f in &files {
        let bytes = std::fs::read(f).unwrap();
        assert!(bytes.starts_with(header));
        let px = &bytes[header.len()..];
        if f.file_name().unwrap().to_str().unwrap().contains("unit000") {
            assert!(px.iter().all(|&p| p == 128));
        } else {
            assert_eq!(*px.iter().min().unwrap(), 0);
            assert_eq!(*px.iter().max().unwrap(), 255);
        }
    }
    assert!(dump_weights(&params, 2, 1, 0, dir.path()).is_err());
}

#[test]
fn pgm_is_readable_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.pgm");
    let f = Frame::new(2, 3, vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.25]).unwrap();
    write_pgm(&p, &f).unwrap();
    let bytes = std::fs::read(p).unwrap();
    assert_eq!(bytes, b"P5\n3 2\n255\n\x00\x80\xff\xff\x00\x40".to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Readout predictions do not change under an invertible affine
    /// re-parameterisation of the representation.
    #[test]
    fn readout_is_affine_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (40, 3);
        let reps = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let targets = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // well-conditioned transform: identity plus a small perturbation
        let mut a = Matrix::identity(k);
        for v in a.as_mut_slice() {
            *v += rng.random_range(-0.3..0.3);
        }
        let shift: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut moved = reps.matmul_bt(&a).unwrap();
        for i in 0..n {
            for (v, s) in moved.row_mut(i).iter_mut().zip(&shift) {
                *v += s;
            }
        }
        let p1 = fit_affine_readout(&reps, &targets).unwrap().predict(&reps).unwrap();
        let p2 = fit_affine_readout(&moved, &targets).unwrap().predict(&moved).unwrap();
        prop_assert!(p1.max_abs_diff(&p2) < 1e-6);
    }
}

#[test]
#[ignore = "needs the MNIST files in $TSE_MNIST_DIR"]
fn mnist_pool_prefix_of_18_holds_every_digit() {
    let dir = std::env::var("TSE_MNIST_DIR").unwrap_or_else(|_| "data/mnist".into());
    let (train, _) = tse_core::experiments::load_mnist_dir(std::path::Path::new(&dir)).unwrap();
    let config = ExperimentConfig::mnist_default();
    let (_, pool) = tse_core::experiments::split_mnist(&train, config.mnist_movie_images).unwrap();
    let mut seen = [false; 10];
    for &l in &pool.labels[..18] {
        seen[l as usize] = true;
    }
    assert!(seen.iter().all(|s| *s), "{:?}", &pool.labels[..18]);
}
