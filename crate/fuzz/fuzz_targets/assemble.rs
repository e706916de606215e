#![no_main]

use libfuzzer_sys::fuzz_target;
use speed_sim::asm::{assemble, disassemble};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(words) = assemble(text) {
        let back = disassemble(&words).expect("assembled words decode");
        assert_eq!(assemble(&back).unwrap(), words);
    }
});
