#![no_main]

use libfuzzer_sys::fuzz_target;
use pqgram::model_file::{model_to_string, parse_model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = parse_model(text) else { return };
    let written = model_to_string(&model);
    let again = parse_model(&written).expect("written model must parse");
    assert_eq!(again.weights, model.weights);
    assert_eq!(model_to_string(&again), written);
});
