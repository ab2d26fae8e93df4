//! Shared fixtures for the criterion benches: the backbone topology with
//! the default switch configuration and a seeded industrial flow draw.

use csqf_core::{
    gen_flows, internet2_topology, validate_config, FlowSpec, ScheduleConfig, TrafficProfile,
    ValidatedConfig, ValidatedTopology,
};

pub fn switch_config() -> ScheduleConfig {
    ScheduleConfig {
        t_cycle_us: 125,
        queue_len: 10,
        queue_num: 3,
        bandwidth_bps: 1_000_000_000,
        mtu_bytes: 1522,
        proc_delay_us: 0,
    }
}

pub fn backbone_instance(
    flow_count: usize,
    seed: u64,
) -> (ValidatedTopology, ValidatedConfig, Vec<FlowSpec>) {
    let topo = internet2_topology();
    let flows =
        gen_flows(&TrafficProfile::industrial(flow_count), &topo, seed).expect("flow draw");
    let cfg = validate_config(&flows, &switch_config()).expect("valid config");
    (topo, cfg, flows)
}
