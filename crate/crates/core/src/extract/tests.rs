use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::Tensor;
use crate::fixtures::{ball, binary_model, cube_planes, random_binary_model, z_cylinder_quadric};
use crate::network::{HyperParams, PrimitiveMatrix};

fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [0; 3].map(|_| rng.random_range(-0.5..0.5))).collect()
}

#[test]
fn selected_rows_become_one_intersection() {
    let hyper = HyperParams {
        p: 8,
        c: 2,
        code_size: 4,
        hidden: 4,
        ..Default::default()
    };
    let prims = Tensor::from_fn(8, 7, |k, m| match m {
        0..=2 if k >= 4 => -1.0,
        0..=2 => 1.0,
        6 => -(k as f64 + 1.0),
        _ => 0.0,
    });
    let mut t_c = Tensor::zeros(8, 2);
    t_c.set(2, 0, 1.0);
    t_c.set(5, 0, 1.0);
    let model = FittedModel::from_parts(
        hyper,
        &PrimitiveMatrix(prims.clone()),
        &PrimitiveMatrix(prims.clone()),
        [t_c, Tensor::zeros(8, 2)],
        [Tensor::new(2, 1, vec![1.0, 0.0]).unwrap(), Tensor::zeros(2, 1)],
    )
    .unwrap();
    let tree = extract_tree(&model).unwrap();
    assert_eq!(tree.cover.len(), 1);
    assert!(tree.residual.is_empty());
    let node = &tree.cover[0];
    assert_eq!(node.len(), 2);
    assert_eq!(node[0].coeffs, [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -3.0]);
    assert!(!node[0].inverted);
    assert_eq!(node[1].coeffs, [-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -6.0]);
    assert!(node[1].inverted);
}

#[test]
fn all_gates_off_is_an_empty_reconstruction() {
    let mut model = binary_model(8, 2, &[vec![ball([0.0; 3], 0.3, 1.0)]], &[]);
    model.params.w_c.data_mut().fill(0.0);
    assert!(matches!(extract_tree(&model), Err(Error::EmptyReconstruction)));
    assert!(marching_cubes(&model, 16).unwrap().is_empty());
}

#[test]
fn empty_selection_column_is_excluded() {
    let mut model = binary_model(8, 2, &[vec![ball([0.0; 3], 0.3, 1.0)]], &[]);
    model.params.w_c.data_mut().fill(1.0);
    let tree = extract_tree(&model).unwrap();
    assert_eq!(tree.cover.len(), 1);
}

#[test]
fn float_model_is_rejected() {
    let model = FittedModel::new(HyperParams::default(), NormalizationTransform::identity()).unwrap();
    assert!(matches!(extract_tree(&model), Err(Error::NotBinary)));
}

#[test]
fn set_semantics() {
    let solid = CsgTree {
        cover: vec![vec![Leaf {
            coeffs: ball([0.0; 3], 0.5, 1.0),
            inverted: false,
            row: 0,
        }]],
        residual: vec![],
        transform: NormalizationTransform::identity(),
    };
    assert_eq!(eval_tree(&solid, &[[0.0; 3], [0.6, 0.0, 0.0]]), vec![true, false]);
    let shell = CsgTree {
        residual: vec![vec![Leaf {
            coeffs: ball([0.0; 3], 0.25, 1.0),
            inverted: false,
            row: 0,
        }]],
        ..solid
    };
    assert_eq!(eval_tree(&shell, &[[0.0; 3], [0.4, 0.0, 0.0]]), vec![false, true]);
}

#[test]
fn tree_matches_network_outside_the_band() {
    for seed in 0..10 {
        let model = random_binary_model(seed, 8, 3);
        let Ok(tree) = extract_tree(&model) else { continue };
        let eval = FieldEvaluator::new(&model).unwrap();
        let alpha = model.hyper.alpha;
        let pts: Vec<Point3> = random_points(2000, seed)
            .into_iter()
            .filter(|&x| tree.leaves().all(|(_, l)| quadric_value(&l.coeffs, x).abs() > alpha))
            .collect();
        assert_eq!(eval_tree(&tree, &pts), eval.inside(&pts), "seed {seed}");
    }
}

#[test]
fn json_round_trip() {
    let model = binary_model(
        8,
        2,
        &[cube_planes(0.35, 10.0)[..4].to_vec()],
        &[vec![z_cylinder_quadric(0.1, 10.0)]],
    );
    let tree = extract_tree(&model).unwrap();
    assert_eq!(CsgTree::from_json(&tree.to_json().unwrap()).unwrap(), tree);
}

#[test]
fn sphere_surface_is_within_two_cells() {
    let model = binary_model(8, 2, &[vec![ball([0.0; 3], 0.4, 100.0)]], &[]);
    let mesh = marching_cubes(&model, 128).unwrap();
    let dev = mesh
        .vertices
        .iter()
        .map(|v| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 0.4).abs())
        .fold(0.0, f64::max);
    assert!(dev < 2.0 / 128.0, "{dev}");
    let c = compactness(&extract_tree(&model).unwrap(), &mesh);
    assert_eq!((c.num_p, c.num_is, c.num_seg), (1, 1, 1));
}

#[test]
fn drilled_cube_has_genus_one() {
    let model = binary_model(
        16,
        2,
        &[cube_planes(0.35, 10.0)],
        &[vec![z_cylinder_quadric(0.15, 10.0)]],
    );
    let mesh = marching_cubes(&model, 64).unwrap();
    assert!(mesh.to_mesh().unwrap().is_watertight());
    assert_eq!(mesh.euler_characteristic(), 0);
}

#[test]
fn cube_of_planes_has_six_segments() {
    let model = binary_model(16, 2, &[cube_planes(0.35, 10.0)], &[]);
    let tree = extract_tree(&model).unwrap();
    let c = compactness(&tree, &marching_cubes(&model, 64).unwrap());
    assert_eq!((c.num_p, c.num_is, c.num_seg), (6, 1, 6));
}

#[test]
fn low_resolution_is_rejected() {
    let model = binary_model(8, 2, &[vec![ball([0.0; 3], 0.4, 1.0)]], &[]);
    assert!(marching_cubes(&model, 8).is_err());
}
