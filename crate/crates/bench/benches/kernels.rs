use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hourglass_core::graddiff::params::ParameterStore;
use hourglass_core::graddiff::tape::Tape;
use hourglass_core::irreps::{
    tensor_product, tensor_product_signature, wigner_d, IrrepTensor, IrrepsSignature,
    RotationSpec,
};
use hourglass_core::layers::blocks::{input_irrep, CgCtx};
use hourglass_core::layers::codec::{AtomMode, CodecLayout};
use hourglass_core::layers::model::{fragment_states, HourglassModel, ModelConfig};
use hourglass_core::layers::self_interaction::SelfInteractionParams;
use hourglass_core::metrics::kabsch_align;
use hourglass_core::protein_io::ideal::ideal_test_fragment;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn bench_tensor_product(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(1);
    let sig = IrrepsSignature::parse("16x0+16x1+16x2").unwrap();
    let out_sig = tensor_product_signature(&sig, &sig, &[0, 1, 2]).unwrap();
    let a = IrrepTensor::standard_normal(sig.clone(), &mut rng);
    let b = IrrepTensor::standard_normal(sig, &mut rng);
    c.bench_function("tensor_product_16ch_lmax2", |bench| {
        bench.iter(|| tensor_product(&a, &b, &out_sig).unwrap())
    });
}

fn bench_wigner(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(2);
    let r = RotationSpec::random(&mut rng);
    c.bench_function("wigner_d_l3", |bench| bench.iter(|| wigner_d(3, &r)));
}

fn bench_self_interaction(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(3);
    let sig = IrrepsSignature::parse("16x0+16x1+16x2").unwrap();
    let mut store: ParameterStore<f32> = ParameterStore::new();
    let params =
        SelfInteractionParams::register(&mut store, &mut rng, "b", sig.clone(), 4, 0, 1e-6);
    let ctx: CgCtx<f32> = CgCtx::new(2);
    let x = IrrepTensor::standard_normal(sig, &mut rng);
    c.bench_function("self_interaction_fwd_bwd_16ch", |bench| {
        bench.iter_batched(
            Tape::<f32>::new,
            |mut tape| {
                let xv = input_irrep(&mut tape, &x);
                let y = params.forward_features(&mut tape, &store, &ctx, &xv, None);
                let s0 = y.blocks[0];
                let sq = tape.mul(s0, s0);
                let loss = tape.sum(sq);
                tape.backward(loss).unwrap();
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_encoder(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(4);
    let mut store: ParameterStore<f32> = ParameterStore::new();
    let config = ModelConfig { levels: 2, channels: vec![16, 24, 36], ..Default::default() };
    let model = HourglassModel::register(&mut store, &mut rng, config).unwrap();
    let frag = ideal_test_fragment(&mut rng, 48, "bench");
    let states = fragment_states(&CodecLayout::new(AtomMode::AllAtom), &frag).unwrap();
    c.bench_function("encoder_forward_48res", |bench| {
        bench.iter_batched(
            Tape::<f32>::inference,
            |mut tape| {
                let ctx: CgCtx<f32> = CgCtx::new(2);
                model.encode(&mut tape, &store, &ctx, &states).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_kabsch(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(5);
    let a: Vec<[f64; 3]> = (0..160)
        .map(|_| {
            [
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            ]
        })
        .collect();
    let r = RotationSpec::random(&mut rng).matrix();
    let b: Vec<[f64; 3]> = a
        .iter()
        .map(|p| hourglass_core::geom::mat_vec(&r, *p))
        .collect();
    c.bench_function("kabsch_160", |bench| {
        bench.iter(|| kabsch_align(&a, &b).unwrap())
    });
}

criterion_group!(
    benches,
    bench_tensor_product,
    bench_wigner,
    bench_self_interaction,
    bench_encoder,
    bench_kabsch
);
criterion_main!(benches);
