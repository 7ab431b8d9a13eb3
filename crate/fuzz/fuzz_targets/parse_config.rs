#![no_main]

use libfuzzer_sys::fuzz_target;
use shortlab::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(s) {
            // a resolved config must survive its own serialisation
            let again = parse_config(&cfg.to_ini()).expect("resolved config reparses");
            assert_eq!(again, cfg);
        }
    }
});
