//! End-to-end properties of the estimators: reproducibility under any
//! worker count and the noise-free diffusion ladder.

use num_complex::Complex64;

use bergmc_core::bergman::magnetic::{magnetic_oracle_plane, MagneticOptions};
use bergmc_core::bergman::{plane_origin_kernel, BasisSpec, OrthonormalBasis};
use bergmc_core::bundle::BundleData;
use bergmc_core::dk::{
    dk_extrapolate, finite_d_kernel, finite_d_matrix, monotonicity_check, DLadder, LadderPoint, DEFAULT_LADDER,
};
use bergmc_core::geometry::{ChartPoint, KahlerModel};
use bergmc_core::mc::{sample_paths, sample_paths_sequential, SeedSpec};
use bergmc_core::paths::{sample_bridge_plane, transport_along, McConfig, PathOptions, TimeGrid};
use bergmc_core::quadrature::sphere_rule;
use bergmc_core::symbol::SymbolSpec;

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn kernel_is_bitwise_reproducible_across_worker_counts() {
    let b = BundleData::new(KahlerModel::plane(1.0).unwrap());
    let x = ChartPoint::plane(0.2, 0.1);
    let y = ChartPoint::plane(-0.4, 0.3);
    let mc = McConfig::new(3000, 30, 11);
    let run = || finite_d_kernel(&b, &SymbolSpec::abs2(), 2.0, 0.5, x, y, &mc).unwrap();
    let one = in_pool(1, run);
    for n in [2, 5] {
        let other = in_pool(n, run);
        assert_eq!(one.value.re.to_bits(), other.value.re.to_bits());
        assert_eq!(one.value.im.to_bits(), other.value.im.to_bits());
        assert_eq!(one.stderr.to_bits(), other.stderr.to_bits());
    }
}

#[test]
fn sphere_matrix_is_bitwise_reproducible_across_worker_counts() {
    let b = BundleData::new(KahlerModel::sphere(1).unwrap());
    let basis = OrthonormalBasis::build(BasisSpec::sphere_full(b).unwrap()).unwrap();
    let rule = sphere_rule(3, 4).unwrap();
    let mc = McConfig::new(300, 20, 5);
    let run = || finite_d_matrix(&SymbolSpec::cos_theta(), 2.0, 0.3, &basis, &rule, &mc).unwrap();
    let one = in_pool(1, run);
    let three = in_pool(3, run);
    assert_eq!(one, three);
}

#[test]
fn sequential_driver_matches_parallel_driver() {
    let b = BundleData::new(KahlerModel::plane(0.5).unwrap());
    let o = ChartPoint::plane(0.0, 0.0);
    let grid = TimeGrid::new(1.0, 25).unwrap();
    let opts = PathOptions::default();
    let f = |i: u64, out: &mut [Complex64]| {
        let p = sample_bridge_plane(&b, o, o, 3.0, grid, SeedSpec::new(2, i), &opts).unwrap();
        out[0] = transport_along(&p);
        true
    };
    assert_eq!(in_pool(4, || sample_paths(5000, 1, f)), sample_paths_sequential(5000, 1, f));
}

#[test]
fn noise_free_ladder_decreases_and_extrapolates_to_the_bergman_kernel() {
    let b = BundleData::new(KahlerModel::plane(1.0).unwrap());
    let o = ChartPoint::plane(0.0, 0.0);
    let points: Vec<LadderPoint> = DEFAULT_LADDER
        .iter()
        .map(|&d| {
            let v = magnetic_oracle_plane(&b, d, 1.0, &o, &o, &SymbolSpec::zero(), &MagneticOptions::default()).unwrap();
            LadderPoint { d, value: v.value, stderr: 0.0 }
        })
        .collect();
    let ladder = DLadder::new(points).unwrap();
    assert!(monotonicity_check(&ladder, true).pass);
    let k = plane_origin_kernel(1.0);
    let fit = dk_extrapolate(&ladder, Some(Complex64::new(k, 0.0))).unwrap();
    assert!(fit.target_deviation.unwrap() < 1e-3 * k, "{fit:?}");
}
