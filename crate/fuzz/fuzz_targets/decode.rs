#![no_main]

use libfuzzer_sys::fuzz_target;
use speed_sim::asm::disassemble;
use speed_sim::isa::{decode, encode};

fuzz_target!(|data: &[u8]| {
    let words: Vec<u32> = data
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    for &w in &words {
        // anything that decodes must re-encode to the same word
        if let Ok(i) = decode(w) {
            assert_eq!(encode(&i).unwrap(), w);
        }
    }
    let _ = disassemble(&words);
});
