use std::f64::consts::PI;

use proptest::prelude::*;
use shape_currents::geometry::{transform_mesh, transform_polyline};
use shape_currents::synth::icosphere;
use shape_currents::*;

fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
}

fn same_atoms(a: &ShapeAtoms, b: &ShapeAtoms, tol: f64) -> bool {
    a.len() == b.len()
        && a.centers().iter().zip(b.centers()).all(|(x, y)| close(*x, *y, tol))
        && a.taus().iter().zip(b.taus()).all(|(x, y)| close(*x, *y, tol))
}

fn flux_norm(s: &ShapeAtoms) -> f64 {
    s.total_flux().iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn icosphere_area_converges() {
    let mesh = icosphere(4, 1.0).unwrap();
    mesh.check_closed().unwrap();
    // direct summation of triangle areas
    let mut area = 0.0;
    for f in mesh.faces() {
        let [a, b, c] = f.map(|i| mesh.vertices()[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        area += 0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    }
    assert!((area - 4.0 * PI).abs() <= 0.01 * 4.0 * PI, "area {area}");
    assert!((mesh.area() - area).abs() <= 1e-12 * area);
    assert_eq!(mesh.faces().len(), 20 * 4usize.pow(4));
    let atoms = mesh_to_atoms(&mesh).unwrap();
    assert!(flux_norm(&atoms) <= 1e-12 * atoms.total_mass());
    assert!(mesh.signed_volume() > 0.0);
}

#[test]
fn generated_closed_shapes_have_zero_flux() {
    let contours = [
        Family::Ellipse { a: 2.0, b: 1.0 },
        Family::RoundedRect { half_width: 2.0, half_height: 0.7, exponent: 4.0 },
        Family::Star { radius: 1.5, amplitude: 0.3, lobes: 5 },
    ];
    for (i, fam) in contours.iter().enumerate() {
        let poly = gen_contour(fam, 100, 0.04, i as u64).unwrap();
        assert!(poly.is_closed());
        assert!(poly.signed_area() > 0.0);
        let atoms = curve_to_atoms(&poly).unwrap();
        assert_eq!(atoms.len(), 99);
        assert!(flux_norm(&atoms) <= 1e-12 * atoms.total_mass());
    }
    let meshes = [
        Family::Sphere { radius: 1.0 },
        Family::Ellipsoid { a: 1.0, b: 1.0, c: 1.8 },
        Family::Pear { length: 2.0, width: 1.2 },
    ];
    for (i, fam) in meshes.iter().enumerate() {
        let mesh = gen_mesh(fam, 1000, 0.04, i as u64).unwrap();
        mesh.check_closed().unwrap();
        assert!(mesh.signed_volume() > 0.0);
        let n = mesh.faces().len() as f64;
        assert!((n - 1000.0).abs() <= 100.0, "{} faces", n);
        let atoms = mesh_to_atoms(&mesh).unwrap();
        assert!(flux_norm(&atoms) <= 1e-12 * atoms.total_mass());
    }
}

#[test]
fn open_polyline_flux_is_end_minus_start() {
    let poly = Polyline2D::new(vec![[0.0, 0.0], [1.0, 2.0], [3.0, 1.0], [4.0, 5.0]], false).unwrap();
    let f = curve_to_atoms(&poly).unwrap().total_flux();
    assert!(close(f, [4.0, 5.0, 0.0], 1e-15));
}

#[test]
fn flipping_negates_every_tau() {
    let mesh = gen_mesh(&Family::Pear { length: 2.0, width: 1.2 }, 400, 0.0, 0).unwrap();
    let a = mesh_to_atoms(&mesh).unwrap();
    let b = mesh_to_atoms(&mesh.flipped()).unwrap();
    assert!(same_atoms(&a.negated(), &b, 1e-12));
    assert!(mesh.flipped().signed_volume() < 0.0);
}

fn arb_polygon() -> impl Strategy<Value = Polyline2D> {
    // star-shaped polygon around the origin: always simple and non-degenerate
    prop::collection::vec(0.5f64..2.0, 5..40).prop_map(|radii| {
        let n = radii.len();
        let pts = radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        Polyline2D::new(pts, true).unwrap()
    })
}

fn arb_similarity_2d() -> impl Strategy<Value = Similarity> {
    (-3.2f64..3.2, 0.2f64..5.0, -10.0f64..10.0, -10.0f64..10.0)
        .prop_map(|(a, s, x, y)| Similarity::rotation_2d(a).with_scale(s).with_translation([x, y, 0.0]))
}

fn arb_similarity_3d() -> impl Strategy<Value = Similarity> {
    (prop::array::uniform3(0.1f64..1.0), -3.2f64..3.2, 0.2f64..5.0, prop::array::uniform3(-10.0f64..10.0))
        .prop_map(|(axis, a, s, t)| Similarity::rotation_3d(axis, a).with_scale(s).with_translation(t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversal_negates_curve_atoms(poly in arb_polygon()) {
        let a = curve_to_atoms(&poly).unwrap();
        let b = curve_to_atoms(&poly.reversed()).unwrap();
        prop_assert_eq!(a.len(), b.len());
        // reversal permutes segments; compare multisets through sorted sums
        let fa = a.total_flux();
        let fb = b.total_flux();
        prop_assert!(close(fa, [-fb[0], -fb[1], -fb[2]], 1e-12));
        prop_assert!((a.total_mass() - b.total_mass()).abs() <= 1e-12 * a.total_mass());
        prop_assert!((poly.signed_area() + poly.reversed().signed_area()).abs() <= 1e-12 * poly.signed_area().abs());
        prop_assert!(flux_norm(&a) <= 1e-12 * a.total_mass());
    }

    #[test]
    fn transforming_atoms_matches_rediscretizing_curve(poly in arb_polygon(), t in arb_similarity_2d()) {
        let direct = transform_shape(&curve_to_atoms(&poly).unwrap(), &t).unwrap();
        let redisc = curve_to_atoms(&transform_polyline(&poly, &t).unwrap()).unwrap();
        prop_assert!(same_atoms(&direct, &redisc, 1e-9));
    }

    #[test]
    fn transforming_atoms_matches_rediscretizing_mesh(depth in 0u32..3, t in arb_similarity_3d()) {
        let mesh = icosphere(depth, 1.3).unwrap();
        let direct = transform_shape(&mesh_to_atoms(&mesh).unwrap(), &t).unwrap();
        let redisc = mesh_to_atoms(&transform_mesh(&mesh, &t).unwrap()).unwrap();
        prop_assert!(same_atoms(&direct, &redisc, 1e-9));
    }

    #[test]
    fn composition_of_similarities(p in prop::array::uniform3(-5.0f64..5.0), s in arb_similarity_3d(), u in arb_similarity_3d()) {
        let both = s.compose(&u);
        prop_assert!(close(both.apply_point(p), s.apply_point(u.apply_point(p)), 1e-9));
    }

    #[test]
    fn scaling_scales_mass(poly in arb_polygon(), s in 0.1f64..10.0) {
        let a = curve_to_atoms(&poly).unwrap();
        let b = transform_shape(&a, &Similarity::scaling(s)).unwrap();
        prop_assert!((b.total_mass() - s * a.total_mass()).abs() <= 1e-12 * b.total_mass());
        let m = mesh_to_atoms(&icosphere(1, 1.0).unwrap()).unwrap();
        let ms = transform_shape(&m, &Similarity::scaling(s)).unwrap();
        prop_assert!((ms.total_mass() - s * s * m.total_mass()).abs() <= 1e-12 * ms.total_mass());
    }
}
