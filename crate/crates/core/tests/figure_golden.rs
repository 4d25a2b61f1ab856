use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use nncert::figure::emit_figure;
use nncert::{Activation, Ellipsoid, Network, Role, SpecPair};

fn scene() -> (Vec<SpecPair>, Network) {
    let net = Network::two_layer(
        DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.5, 1.0, 0.3, -0.2]),
        DVector::from_vec(vec![0.1, -0.1, 0.0]),
        DMatrix::from_row_slice(2, 3, &[0.8, 0.1, -0.4, -0.2, 0.6, 0.5]),
        DVector::from_vec(vec![1.0, 0.5]),
        Activation::Tanh,
    )
    .unwrap();
    let pairs = vec![
        SpecPair::new(
            Ellipsoid::ball(&[-1.0, 0.0], 0.5, Role::Input).unwrap(),
            Ellipsoid::ball(&[0.5, 0.5], 1.0, Role::Output).unwrap(),
        )
        .unwrap(),
        SpecPair::new(
            Ellipsoid::input(
                DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]),
                DVector::from_vec(vec![-2.0, 0.0]),
            )
            .unwrap(),
            Ellipsoid::ball(&[1.5, 0.5], 0.8, Role::Output).unwrap(),
        )
        .unwrap(),
    ];
    (pairs, net)
}

#[test]
fn matches_golden_file() {
    let (pairs, net) = scene();
    let svg = emit_figure(&pairs, &net, 25, 3).unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/small.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &svg).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file; regenerate with UPDATE_GOLDEN=1");
    assert_eq!(svg, golden);
}

#[test]
fn element_counts() {
    let (pairs, net) = scene();
    let svg = emit_figure(&pairs, &net, 500, 0).unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polygon").count(), 4);
    assert_eq!(svg.matches("<circle").count(), 2 * 2 * 500);

    let empty = emit_figure(&pairs, &net, 0, 0).unwrap();
    assert_eq!(empty.matches("<circle").count(), 0);
    assert_eq!(empty.matches("<polygon").count(), 4);
}

#[test]
fn rejects_non_planar() {
    let net = Network::two_layer(
        DMatrix::zeros(2, 3),
        DVector::zeros(2),
        DMatrix::zeros(2, 2),
        DVector::zeros(2),
        Activation::Tanh,
    )
    .unwrap();
    assert!(emit_figure(&[], &net, 10, 0).is_err());
}
