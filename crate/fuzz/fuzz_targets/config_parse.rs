#![no_main]

use libfuzzer_sys::fuzz_target;
use speed_sim::vcore::MachineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = MachineConfig::parse(text) {
        assert_eq!(MachineConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
});
