use std::time::Duration;

use proptest::prelude::*;
use rtemu::bench::Stall;
use rtemu::config::{ClockName, ModeName, PolicyName, RunConfig};
use rtemu::netmodel::{build_topology, preset_definition, PRESETS};

#[test]
fn defaults_render_and_parse_back() {
    let d = RunConfig::default();
    let text = d.render();
    assert_eq!(RunConfig::parse(&text).unwrap(), d);
}

#[test]
fn inline_presets_round_trip_and_build() {
    for name in PRESETS {
        let cfg = RunConfig {
            topology: preset_definition(name).unwrap(),
            ..Default::default()
        };
        let back = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
        back.validate().unwrap();
        build_topology(&back.topology).unwrap();
    }
}

proptest! {
    #[test]
    fn arbitrary_configs_round_trip(
        fixed in any::<bool>(),
        batched in any::<bool>(),
        test_clock in any::<bool>(),
        poll_us in 1u64..100_000,
        t_batch_us in 1u64..100_000,
        buf_cap in 1usize..1 << 20,
        cap in 1usize..4096,
        count in 1u64..10_000,
        interval_us in 1u64..1_000_000,
        size in 16usize..9000,
        seed in any::<u64>(),
        stalls in prop::collection::vec((0u64..10_000, 1u64..1_000), 0..4),
    ) {
        let mut c = RunConfig::default();
        c.scheduler.policy = if fixed { PolicyName::FixedTimeout } else { PolicyName::Corrected };
        c.scheduler.max_poll = Duration::from_micros(poll_us);
        c.capture.mode = if batched { ModeName::Batched } else { ModeName::Immediate };
        c.capture.t_batch = Duration::from_micros(t_batch_us);
        c.capture.buf_cap = buf_cap;
        c.capture.handoff_capacity = cap;
        c.clock.kind = if test_clock { ClockName::Test } else { ClockName::Real };
        c.bench.count = count;
        c.bench.interval = Duration::from_micros(interval_us);
        c.bench.size = size;
        c.bench.seed = seed;
        c.bench.stalls = stalls
            .into_iter()
            .map(|(a, l)| Stall { at: Duration::from_millis(a), length: Duration::from_millis(l) })
            .collect();
        prop_assert_eq!(RunConfig::parse(&c.render()).unwrap(), c.clone());
        prop_assert!(c.validate().is_ok());
    }
}
