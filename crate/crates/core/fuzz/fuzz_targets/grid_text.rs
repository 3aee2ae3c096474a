#![no_main]
use libfuzzer_sys::fuzz_target;
use marcinkiewicz::functions::{read_grid_text, write_grid_text};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(f) = read_grid_text(text) {
            let out = write_grid_text(&f).expect("parsed grid writes");
            let back = read_grid_text(&out).expect("written grid reparses");
            assert_eq!(back.values(), f.values());
        }
    }
});
