use labelprop_demo::{confidence_demo, flow_demo, flow_picture, propagation_demo};

#[test]
fn flow_demo_recovers_the_shift() {
    let d = flow_demo(3.0, -2.0, 5).unwrap();
    assert!(d.mean_epe() < 0.5, "epe {}", d.mean_epe());
    assert!((d.mean_dx() - 3.0).abs() < 0.3 && (d.mean_dy() + 2.0).abs() < 0.3);
    let f = d.flow();
    assert_eq!((f.width(), f.height(), f.rgba().len()), (64, 64, 64 * 64 * 4));
}

#[test]
fn flow_demo_handles_half_pixel_shifts() {
    let d = flow_demo(0.5, 0.0, 2).unwrap();
    assert!(d.mean_epe() < 0.25, "epe {}", d.mean_epe());
}

#[test]
fn zero_flow_renders_white() {
    let zero = labelprop::FlowField::zeros(3, 2).unwrap();
    let p = flow_picture(&zero, 4.0);
    assert!((0..2).all(|y| (0..3).all(|x| p.pixel(x, y) == [255; 4])));
}

#[test]
fn noise_lowers_the_confidence() {
    let clean = confidence_demo(7, 0.0, false).unwrap();
    let noisy = confidence_demo(7, 0.02, false).unwrap();
    assert!(clean.mean_confidence() > noisy.mean_confidence());
    assert!(noisy.mean_residual() > clean.mean_residual());
    assert_eq!(clean.confidence().rgba().len(), 48 * 48 * 4);
}

#[test]
fn propagation_demo_improves_on_the_rough_maps() {
    let d = propagation_demo(1, 0.3, "l+s+c").unwrap();
    assert!(d.fused_f1() > d.rough_f1(), "{} vs {}", d.fused_f1(), d.rough_f1());
    assert_eq!(d.fused().rgba().len(), d.truth().rgba().len());
    assert!(propagation_demo(1, 0.3, "l+q").is_err());
}
