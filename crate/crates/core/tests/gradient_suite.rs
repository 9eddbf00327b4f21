mod common;

#[test]
fn every_layer_type_and_architecture_passes_finite_differences() {
    let o = common::gradient_suite();
    assert!(o.pass, "{}", o.detail);
}
