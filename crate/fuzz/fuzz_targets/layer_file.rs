#![no_main]

use libfuzzer_sys::fuzz_target;
use speed_sim::dataflow::parse_layers;
use speed_sim::isa::Precision;
use speed_sim::workloads::parse_model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(layers) = parse_layers(text, Precision::P8) {
        for l in &layers {
            assert!(l.validate().is_ok());
        }
    }
    let _ = parse_model("fuzz", text, Precision::P16);
});
