//! Scratch diagnostics (not part of the deliverable surface).

use bounder::control::SlipParams;
use bounder::env::EnvParams;
use bounder::prefit::{collect_dataset, CollectOptions};
use bounder::robot::RobotModel;
use bounder::sim::Terrain;

fn main() {
    let model = RobotModel::default();
    let terrain = Terrain::flat(0.6);
    let slip = SlipParams::default();
    for noise in [0.015, 0.03] {
        let mut ok = 0;
        let mut detail = String::new();
        for master in [42u64, 7, 1, 99, 1234, 5, 2024, 77, 3, 17, 256, 1000] {
            let opts = CollectOptions {
                n_control_steps: 60_000,
                seed: master,
                train_fraction: 0.9,
                action_noise_std: noise,
            };
            match collect_dataset(&opts, &slip, &EnvParams::default(), &model, &terrain) {
                Ok(_) => ok += 1,
                Err(_) => detail.push_str(format!(" [{master}]").as_str()),
            }
        }
        println!("noise={noise}: {ok}/12 collections ok{detail}");
    }
}
