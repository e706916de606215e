#![no_main]

use libfuzzer_sys::fuzz_target;
use speed_sim::workloads::Tensor;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::from_bytes(data) {
        assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
    }
});
