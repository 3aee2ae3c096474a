#![no_main]
use libfuzzer_sys::fuzz_target;
use marcinkiewicz::sparse::SparseFamilyRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(r) = SparseFamilyRecord::parse(text) {
            let back = SparseFamilyRecord::parse(&r.to_text()).expect("record text reparses");
            assert_eq!(back, r);
        }
    }
});
