use proptest::prelude::*;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use speed_sim::dataflow::LayerSpec;
use speed_sim::isa::Precision;
use speed_sim::workloads::*;

fn ones(c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_values(c, h, w, Precision::P16, vec![1; c * h * w]).unwrap()
}

#[test]
fn all_ones_kernel_sums_its_window() {
    let l = LayerSpec::new("o", 2, 1, 3, 3, 3, 1, 0, Precision::P16);
    let out = conv2d_ref(&ones(2, 3, 3), &[ones(2, 3, 3)], &l, 0).unwrap();
    assert_eq!(out.dims(), (1, 1, 1));
    assert_eq!(out.get(0, 0, 0), 18);
    // with padding the corner sees a 2x2 patch per channel
    let l = LayerSpec::new("o", 2, 1, 3, 3, 3, 1, 1, Precision::P16);
    let out = conv2d_ref(&ones(2, 3, 3), &[ones(2, 3, 3)], &l, 0).unwrap();
    assert_eq!((out.get(0, 0, 0), out.get(0, 1, 1), out.get(0, 0, 1)), (8, 18, 12));
}

#[test]
fn stride_picks_every_other_window() {
    let mut t = Tensor::zeros(1, 5, 5, Precision::P8);
    for y in 0..5 {
        for x in 0..5 {
            t.set(0, y, x, (y * 5 + x) as i16);
        }
    }
    let k = Tensor::from_values(1, 1, 1, Precision::P8, vec![1]).unwrap();
    let l = LayerSpec::new("s", 1, 1, 5, 5, 1, 2, 0, Precision::P8);
    let acc = conv2d_acc(&t, &[k], &l).unwrap();
    assert_eq!(acc, [0, 2, 4, 10, 12, 14, 20, 22, 24]);
}

#[test]
fn shape_checks() {
    let l = LayerSpec::new("x", 2, 1, 3, 3, 3, 1, 0, Precision::P16);
    assert!(matches!(
        conv2d_acc(&ones(1, 3, 3), &[ones(2, 3, 3)], &l),
        Err(WorkloadError::ShapeMismatch(_))
    ));
    assert!(conv2d_acc(&ones(2, 3, 3), &[], &l).is_err());
    assert!(conv2d_acc(&ones(2, 3, 3), &[ones(2, 1, 1)], &l).is_err());
}

#[test]
fn gen_tensor_takes_top_bits() {
    for p in Precision::ALL {
        let t = gen_tensor(42, (2, 3, 4), p);
        let mut rng = Xoshiro256StarStar::seed_from_u64(42);
        for &v in &t.values {
            let word = rng.next_u64();
            assert_eq!(v as i64, (word as i64) >> (64 - p.bits()));
            assert!(p.contains(v as i32));
        }
    }
    assert_eq!(
        gen_tensor(1, (1, 2, 2), Precision::P8),
        gen_tensor(1, (1, 2, 2), Precision::P8)
    );
    assert_ne!(
        gen_tensor(1, (1, 4, 4), Precision::P8),
        gen_tensor(2, (1, 4, 4), Precision::P8)
    );
}

#[test]
fn gen_weights_splits_one_stream() {
    let ws = gen_weights(5, 3, 2, 3, Precision::P4);
    assert_eq!(ws.len(), 3);
    let all = gen_tensor(5, (6, 3, 3), Precision::P4);
    let flat: Vec<i16> = ws.iter().flat_map(|w| w.values.clone()).collect();
    assert_eq!(flat, all.values);
}

#[test]
fn tensor_rejects_bad_input() {
    assert!(matches!(
        Tensor::from_values(1, 1, 1, Precision::P4, vec![8]),
        Err(WorkloadError::OutOfRange { value: 8, .. })
    ));
    assert!(Tensor::from_values(1, 2, 2, Precision::P8, vec![0; 3]).is_err());
    let good = gen_tensor(3, (2, 2, 2), Precision::P8).to_bytes();
    assert!(Tensor::from_bytes(&good[..good.len() - 1]).is_err());
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(Tensor::from_bytes(&bad_magic).is_err());
    assert!(Tensor::from_bytes(&[]).is_err());
}

#[test]
fn tensor_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    for p in Precision::ALL {
        let t = gen_tensor(8, (3, 5, 2), p);
        t.dump(std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(Tensor::load(std::fs::File::open(&path).unwrap()).unwrap(), t);
    }
}

#[test]
fn model_tables_load() {
    for name in MODEL_NAMES {
        let m = model_layers(name, Precision::P8).unwrap();
        assert!(!m.layers.is_empty(), "{name}");
        assert!(m.layers.iter().all(|l| l.precision == Precision::P8));
    }
    let vgg = model_layers("vgg16", Precision::P16).unwrap();
    assert_eq!(vgg.layers.len(), 13);
    assert!(vgg.layers.iter().all(|l| l.k == 3 && l.stride == 1 && l.pad == 1));
    let g = model_layers("GoogLeNet", Precision::P16).unwrap();
    assert!(g.layers.iter().any(|l| l.k == 1));
    assert!(g.layers.iter().any(|l| l.k == 5));
    assert!(g.layers.iter().any(|l| l.k == 7 && l.stride == 2));
    let r = model_layers("resnet18", Precision::P16).unwrap();
    assert!(r.layers.iter().any(|l| l.k == 1 && l.stride == 2));
    assert!(matches!(
        model_layers("alexnet", Precision::P8),
        Err(WorkloadError::UnknownModel(_))
    ));
}

#[test]
fn model_chain_is_checked() {
    let head = "name,cin,cout,h,w,k,stride,pad,src\n";
    let ok = format!("{head}a,3,8,8,8,3,1,1,input\nb,8,4,8,8,1,1,0,a\nc,8,4,8,8,1,1,0,a\nd,8,2,4,4,1,1,0,b+c/p\n");
    assert_eq!(parse_model("m", &ok, Precision::P8).unwrap().layers.len(), 4);
    let wrong_c = format!("{head}a,3,8,8,8,3,1,1,input\nb,7,4,8,8,1,1,0,a\n");
    assert!(matches!(
        parse_model("m", &wrong_c, Precision::P8),
        Err(WorkloadError::Chain { .. })
    ));
    let unknown = format!("{head}a,3,8,8,8,3,1,1,zz\n");
    assert!(parse_model("m", &unknown, Precision::P8).is_err());
    let dup = format!("{head}a,3,8,8,8,3,1,1,input\na,8,8,8,8,3,1,1,a\n");
    assert!(parse_model("m", &dup, Precision::P8).is_err());
}

fn small_layer() -> impl Strategy<Value = (LayerSpec, u64)> {
    (
        1usize..5,
        1usize..4,
        3usize..7,
        prop::sample::select(vec![1usize, 3]),
        1usize..3,
        any::<u64>(),
    )
        .prop_map(|(cin, cout, hw, k, stride, seed)| {
            (
                LayerSpec::new("p", cin, cout, hw, hw, k, stride, k / 2, Precision::P8),
                seed,
            )
        })
}

proptest! {
    #[test]
    fn conv_is_linear_in_the_input((l, seed) in small_layer()) {
        let a = gen_tensor(seed, (l.cin, l.h, l.w), Precision::P4);
        let b = gen_tensor(seed ^ 1, (l.cin, l.h, l.w), Precision::P4);
        let sum: Vec<i16> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        let s = Tensor::from_values(l.cin, l.h, l.w, Precision::P8, sum).unwrap();
        let widen = |t: &Tensor| Tensor::from_values(t.c, t.h, t.w, Precision::P8, t.values.clone()).unwrap();
        let w = gen_weights(seed ^ 2, l.cout, l.cin, l.k, Precision::P8);
        let ya = conv2d_acc(&widen(&a), &w, &l).unwrap();
        let yb = conv2d_acc(&widen(&b), &w, &l).unwrap();
        let ys = conv2d_acc(&s, &w, &l).unwrap();
        for i in 0..ys.len() {
            prop_assert_eq!(ys[i], ya[i] + yb[i]);
        }
    }

    #[test]
    fn tensor_bytes_round_trip(seed: u64, c in 1usize..4, h in 1usize..4, w in 1usize..4, pi in 0usize..3) {
        let t = gen_tensor(seed, (c, h, w), Precision::ALL[pi]);
        prop_assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn tensor_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = Tensor::from_bytes(&bytes);
    }
}
