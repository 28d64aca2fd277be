mod common;

use cqnmd::oracle::FockSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_states_match_dense_fock_space() {
    let qb = common::four_mode_basis();
    assert_eq!(qb.n_modes(), 4);
    let space = FockSpace::new(4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = common::FockErrors::default();
    for _ in 0..100 {
        worst.merge(common::fock_errors(&qb, &space, &mut rng));
    }
    assert!(worst.max() < 1e-12, "{worst:?}");
}

#[test]
fn truncation_is_reported() {
    let space = FockSpace::new(2, 2).unwrap();
    let v = space.two_photon(&faer::Mat::from_fn(2, 2, |i, j| num_complex::Complex64::new((i + j) as f64, 0.0))).unwrap();
    assert!(space.apply(0, cqnmd::oracle::Ladder::Create, &v).is_err());
}
