#![no_main]
use libfuzzer_sys::fuzz_target;
use marcinkiewicz::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            let again = ExperimentConfig::parse(&cfg.to_text()).expect("canonical text reparses");
            assert_eq!(again.to_text(), cfg.to_text());
        }
    }
});
