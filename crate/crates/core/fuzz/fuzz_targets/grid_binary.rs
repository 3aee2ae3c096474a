#![no_main]
use libfuzzer_sys::fuzz_target;
use marcinkiewicz::functions::{read_grid_binary, write_grid_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = read_grid_binary(data) {
        let out = write_grid_binary(&f).expect("parsed grid writes");
        let back = read_grid_binary(&out).expect("written grid reparses");
        assert_eq!(back.values(), f.values());
    }
});
