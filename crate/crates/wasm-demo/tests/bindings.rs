use fairmle_wasm_demo::{compare_methods, el_tilt, target_sweep};
use serde_json::Value;

fn parse(s: Result<String, wasm_bindgen::JsValue>) -> Value {
    serde_json::from_str(&s.ok().expect("binding returned an error")).unwrap()
}

#[test]
fn compare_methods_reports_all_five() {
    let v = parse(compare_methods(800, 4, 0.05));
    let rows = v.as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["M0", "M1", "M2", "M3", "M4"]);
    let m0 = rows[0]["mse"].as_f64().unwrap();
    assert!(rows.iter().all(|r| r["mse"].as_f64().unwrap() >= 0.0));
    assert!(rows[3]["mse"].as_f64().unwrap() < rows[1]["mse"].as_f64().unwrap());
    assert!(m0 < rows[1]["mse"].as_f64().unwrap());
}

#[test]
fn sweep_pins_the_effect_and_error_falls_toward_the_unconstrained_value() {
    let v = parse(target_sweep(800, 4, 2.0, 3));
    let pts = v.as_array().unwrap();
    for p in pts {
        assert!((p["effect"].as_f64().unwrap() - p["target"].as_f64().unwrap()).abs() < 1e-6);
    }
    assert!(pts[2]["mse"].as_f64().unwrap() < pts[0]["mse"].as_f64().unwrap());
}

#[test]
fn tilt_weights_form_a_distribution() {
    let v = parse(el_tilt(500, 3, -0.2));
    let w: Vec<f64> = v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(w.len(), 500);
    assert!(w.iter().all(|&p| p > 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(v["lambda"].as_f64().unwrap() > 0.0);
}
