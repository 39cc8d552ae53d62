use nlos_core::scene::{sample_scene, AugmentParams, BaseShape, Scene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PLANE_PATCH_SEED0: &str = include_str!("data/plane_patch_seed0.txt");

#[test]
fn plane_patch_seed0_matches_golden_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scene = sample_scene(&mut rng, BaseShape::PlanePatch, &AugmentParams::default()).unwrap();
    assert_eq!(scene.to_string(), PLANE_PATCH_SEED0);

    let frozen: Scene = PLANE_PATCH_SEED0.parse().unwrap();
    assert_eq!(frozen.points().len(), scene.points().len());
    for (a, b) in frozen.points().iter().zip(scene.points()) {
        assert_eq!(a.position, b.position);
        assert_eq!(a.albedo, b.albedo);
    }
}
