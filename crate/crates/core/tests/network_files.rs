use std::path::PathBuf;

use slowvar::systems::{bistable, linear, BistableParams};
use slowvar::{load_network, validate_network, QssmaModel, ReactionNetwork};

fn networks() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../networks")
}

fn same_network(a: &ReactionNetwork, b: &ReactionNetwork) {
    assert_eq!(a.species(), b.species());
    assert_eq!(a.reaction_count(), b.reaction_count());
    assert_eq!(a.fast_set(), b.fast_set());
    for j in 0..a.reaction_count() {
        assert_eq!(a.net(j), b.net(j));
        assert_eq!(a.reactions()[j].reactants, b.reactions()[j].reactants);
        for x in [[0, 0], [1, 0], [3, 7], [120, 45]] {
            assert_eq!(a.propensity(j, &x), b.propensity(j, &x), "reaction {j} at {x:?}");
        }
    }
}

#[test]
fn linear_file_matches_constructor() {
    let f = load_network(&networks().join("linear.toml")).unwrap();
    let (net, proj) = linear(1.0, 1.0, 100.0, 10.0);
    same_network(&f.network, &net);
    assert_eq!(f.projection, proj);
    assert_eq!(
        f.qssma,
        Some(QssmaModel::Linear {
            k1: 1.0,
            k2: 1.0,
            volume: 100.0
        })
    );
    assert!(validate_network(&f.network, &f.projection).is_valid());
}

#[test]
fn bistable_file_matches_constructor() {
    // The extension may be omitted.
    let f = load_network(&networks().join("bistable")).unwrap();
    let p = BistableParams::default();
    let (net, proj) = bistable(&p);
    same_network(&f.network, &net);
    assert_eq!(f.projection, proj);
    assert_eq!(f.qssma, Some(QssmaModel::Bistable(p)));
    assert_eq!(f.initial, Some(vec![100, 100]));
    assert!(validate_network(&f.network, &f.projection).is_valid());
}

#[test]
fn bistable_with_wrong_projection_cites_r5() {
    let text = std::fs::read_to_string(networks().join("bistable.toml"))
        .unwrap()
        .replace("coefficients = [1, 2]", "coefficients = [1, 1]");
    let f = slowvar::parse_network(&text, "bistable.toml".as_ref()).unwrap();
    let report = validate_network(&f.network, &f.projection);
    assert!(!report.is_valid());
    assert!(report.to_string().contains("R5"), "{report}");
}

#[test]
fn missing_file_is_a_parse_error() {
    let e = load_network(&networks().join("nope")).unwrap_err();
    assert_eq!(e.kind(), "parse");
}
