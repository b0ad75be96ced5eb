#![no_main]

use libfuzzer_sys::fuzz_target;
use resflow::{eval_resnet, ResNetParams};

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = ResNetParams::from_json_slice(data) {
        if net.dim() <= 16 && net.n() <= 256 {
            let y = vec![0.1; net.dim()];
            assert_eq!(eval_resnet(&net, 0.0, &y).unwrap(), y);
            let _ = eval_resnet(&net, 0.5, &y).unwrap();
        }
    }
});
