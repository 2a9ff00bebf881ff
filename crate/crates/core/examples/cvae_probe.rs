//! Scratch: how fast can the cVAE memorize 20 (feature, rot6d) pairs?
//! Run: cargo run --release -p c2f-core --example cvae_probe -- <lr> <steps> <beta>

use c2f_core::actor::{cvae_loss, ActorConfig, ActorNet};
use c2f_core::math::{matrix_to_rot6d, rot6d_to_matrix, splitmix64};
use c2f_core::nn::{Adam, ForwardCtx, GradAccum, ParamStore};
use c2f_core::tape::Tape;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8000);
    let beta: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let fdim = 48;
    let cfg = ActorConfig {
        z_dim: 8,
        beta,
        n_proposals: 4,
        k_points: 3,
        enc_widths: vec![32],
        dec_widths: vec![32],
        ds_widths: vec![32],
    };
    let mut store = ParamStore::<f32>::new();
    let net = ActorNet::new(&mut store, fdim, &cfg, 5);

    // 20 synthetic pairs: distinct features, normal-ish rotations
    let mut state = 9u64;
    let mut r = move || {
        state = splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let sim: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let base: Vec<f64> = (0..fdim).map(|_| r() * 2.0 - 1.0).collect();
    let feats: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            base.iter()
                .map(|b| if sim > 0.0 { b + sim * (r() - 0.5) } else { r() * 2.0 - 1.0 })
                .collect()
        })
        .collect();
    let rots: Vec<[f64; 6]> = (0..20)
        .map(|_| {
            let raw = [r() - 0.5, r() - 0.5, r() - 0.5, r() - 0.5, r() - 0.5, r() - 0.5];
            matrix_to_rot6d(&rot6d_to_matrix(&raw))
        })
        .collect();

    let trainable: Vec<_> = store.iter_ids().collect();
    let mut adam = Adam::new(&store, lr);
    for step in 0..steps {
        let mut tape = Tape::<f32>::new();
        let mut ctx = ForwardCtx::new();
        let mut flat = Vec::new();
        for f in &feats {
            flat.extend(f.iter().map(|v| *v as f32));
        }
        let rows = tape.leaf(flat, 20, fdim);
        let losses = cvae_loss(&mut tape, &store, &mut ctx, &net, rows, &rots, beta, 1000 + step);
        let g = tape.backward(losses.total);
        let mut acc = GradAccum::new(&store);
        acc.add_scaled(&tape, &g, &ctx, 1.0);
        adam.step(&mut store, &acc, &trainable);
        if step % 2000 == 0 || step + 1 == steps {
            println!(
                "step {step}: recon {:.5} kl {:.4}",
                tape.scalar_value(losses.recon),
                tape.scalar_value(losses.kl)
            );
        }
    }
}
