#![no_main]

use cbplab_cli::config::Job;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(job) = serde_json::from_slice::<Job>(data) {
        let back: Job = serde_json::from_str(&job.canonical()).expect("canonical job parses");
        assert_eq!(back.hash(), job.hash());
    }
});
