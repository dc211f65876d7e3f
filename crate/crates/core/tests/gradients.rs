mod common;

use igmtf::model::Variant;

#[test]
fn full_model_loss_gradients_match_finite_differences() {
    for seed in [1, 2] {
        let check = common::end_to_end_gradcheck(&common::micro(Variant::Full, seed), 1e-4);
        assert!(check.passes(1e-4), "seed {seed}: {check:?}");
        // gru 6x(1x4) + 3x(4x4), mlp 3x(4x4 + 1x4), maps 2x(4x4), head 8x1 + 1
        assert_eq!(check.entries, 24 + 48 + 60 + 32 + 9);
    }
}

#[test]
fn variants_without_maps_or_similarity_sampling_check_out() {
    for variant in [Variant::Nw, Variant::Ns] {
        let check = common::end_to_end_gradcheck(&common::micro(variant, 3), 1e-4);
        assert!(check.passes(1e-4), "{variant:?}: {check:?}");
    }
}

#[test]
fn regularizer_gradient_is_included() {
    let check = common::end_to_end_gradcheck(&common::micro(Variant::Full, 4), 0.5);
    assert!(check.passes(1e-4), "{check:?}");
}
