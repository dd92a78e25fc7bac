use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::extract::{eval_tree, extract_tree};
use crate::fixtures::{ball, binary_model, cube_planes, half_space, random_binary_model, z_cylinder_quadric};

fn points(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [0; 3].map(|_| rng.random_range(-0.5..0.5))).collect()
}

fn agreement(tree: &CsgTree, script: &str, pts: &[Point3]) -> f64 {
    let solid = interpret(script).unwrap();
    let want = eval_tree(tree, pts);
    let got = solid.contains_all(pts);
    want.iter().zip(&got).filter(|(a, b)| a == b).count() as f64 / pts.len() as f64
}

fn tree(cover: &[Vec<[f64; 7]>], residual: &[Vec<[f64; 7]>]) -> CsgTree {
    extract_tree(&binary_model(16, 4, cover, residual)).unwrap()
}

#[test]
fn lone_sphere_in_the_scaffold() {
    let t = tree(&[vec![ball([0.0; 3], 0.5, 1.0)]], &[]);
    let script = emit_openscad(&t, &ExportOptions::default()).unwrap();
    lint(&script).unwrap();
    assert!(script.contains("sphere(r=0.5);"), "{script}");
    assert_eq!(script.matches("sphere(").count(), 1);
    assert!(script.contains("difference() {"));
    // empty residual keeps the fixed two-union form
    assert!(script.contains("  union() {\n  }\n}"), "{script}");
    assert!(script
        .lines()
        .take_while(|l| l.starts_with("//"))
        .all(|l| l.starts_with("// d2csg:")));
    assert!(script.contains("// d2csg: cover shape 0 row 0 sphere"));
}

#[test]
fn sphere_minus_inverse_sphere_is_a_shell() {
    let mut inv = ball([0.0; 3], 0.2, 1.0);
    inv.iter_mut().for_each(|v| *v = -*v);
    let t = tree(&[vec![ball([0.0; 3], 0.45, 1.0), inv]], &[]);
    assert!(t.cover[0][1].inverted);
    let script = emit_openscad(&t, &ExportOptions::default()).unwrap();
    lint(&script).unwrap();
    assert!(script.contains("difference() {\n      intersection() {"), "{script}");
    assert_eq!(agreement(&t, &script, &points(1000, 1)), 1.0);
    let solid = interpret(&script).unwrap();
    assert!(!solid.contains([0.0; 3]));
    assert!(solid.contains([0.3, 0.0, 0.0]));
}

#[test]
fn six_axis_planes_collapse_into_one_cube() {
    let t = tree(&[cube_planes(0.35, 10.0)], &[vec![z_cylinder_quadric(0.15, 10.0)]]);
    let script = emit_openscad(&t, &ExportOptions::default()).unwrap();
    lint(&script).unwrap();
    assert!(!script.contains("multmatrix"), "{script}");
    assert!(script.contains("cube([0.7, 0.7, 0.7])"), "{script}");
    assert!(script.contains("cylinder("));
    assert_eq!(agreement(&t, &script, &points(2000, 2)), 1.0);
}

#[test]
fn oblique_half_spaces_and_shapes_on_every_axis() {
    let mut oblique = [0.0, 0.0, 0.0, 1.0, 1.0, 0.5, -0.2];
    oblique.iter_mut().for_each(|v| *v *= 3.0);
    let x_cyl = [0.0, 4.0, 1.0, 0.0, 0.4, 0.0, -0.05];
    let y_cyl = [2.0, 0.0, 1.0, 0.4, 0.0, 0.0, -0.06];
    let slab = [0.0, 0.0, 5.0, 0.0, 0.0, 1.0, -0.1];
    let ellipsoid = [1.0, 4.0, 9.0, 0.0, 0.0, 0.0, -0.2];
    let t = tree(
        &[
            vec![oblique, half_space(0, -1.0, 0.3, 1.0)],
            vec![x_cyl],
            vec![y_cyl, slab],
            vec![ellipsoid],
        ],
        &[vec![ball([0.3, 0.3, 0.3], 0.15, 1.0)]],
    );
    let script = emit_openscad(&t, &ExportOptions::default()).unwrap();
    lint(&script).unwrap();
    for kind in ["half-space", "cylinder", "slab", "ellipsoid", "sphere"] {
        assert!(script.contains(kind), "{kind}");
    }
    assert!(!script.contains("polyhedron("));
    assert_eq!(agreement(&t, &script, &points(4000, 3)), 1.0);
}

#[test]
fn world_coordinates_undo_the_normalisation() {
    let mut t = tree(
        &[
            vec![ball([0.1, 0.0, 0.0], 0.3, 1.0)],
            vec![[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -0.01]],
        ],
        &[],
    );
    t.transform = NormalizationTransform {
        scale: 0.25,
        translation: [0.5, -1.0, 0.0],
    };
    let opts = ExportOptions {
        world: true,
        ..Default::default()
    };
    let solid = interpret(&emit_openscad(&t, &opts).unwrap()).unwrap();
    let pts = points(2000, 4);
    let world: Vec<Point3> = pts.iter().map(|&p| t.transform.invert(p)).collect();
    assert_eq!(solid.contains_all(&world), eval_tree(&t, &pts));
}

#[test]
fn unclassified_leaves_become_polyhedra() {
    // paraboloid x² + y² − z − 0.2 ≤ 0
    let para = [1.0, 1.0, 0.0, 0.0, 0.0, -1.0, -0.2];
    let t = tree(&[vec![para, ball([0.0; 3], 0.45, 1.0)]], &[]);
    let script = emit_openscad(&t, &ExportOptions::default()).unwrap();
    lint(&script).unwrap();
    assert_eq!(script.matches("polyhedron(").count(), 1);
    assert!(agreement(&t, &script, &points(2000, 5)) >= 0.99);
}

#[test]
fn no_classify_meshes_every_leaf() {
    let t = tree(&[cube_planes(0.3, 1.0)], &[vec![z_cylinder_quadric(0.1, 1.0)]]);
    let opts = ExportOptions {
        classify: false,
        ..Default::default()
    };
    let script = emit_openscad(&t, &opts).unwrap();
    lint(&script).unwrap();
    assert_eq!(script.matches("polyhedron(").count(), 7);
    assert!(!script.contains("sphere(") && !script.contains("cylinder("));
    assert!(agreement(&t, &script, &points(1000, 6)) >= 0.99);
}

#[test]
fn random_models_round_trip() {
    for seed in 0..4 {
        let model = random_binary_model(seed, 8, 3);
        let Ok(t) = extract_tree(&model) else { continue };
        let script = emit_openscad(&t, &ExportOptions::default()).unwrap();
        lint(&script).unwrap();
        let a = agreement(&t, &script, &points(500, seed));
        assert!(a >= 0.97, "seed {seed}: {a}");
    }
}

#[test]
fn empty_tree_is_rejected() {
    let t = CsgTree {
        cover: vec![],
        residual: vec![],
        transform: NormalizationTransform::identity(),
    };
    assert!(matches!(
        emit_openscad(&t, &ExportOptions::default()),
        Err(Error::EmptyReconstruction)
    ));
}
