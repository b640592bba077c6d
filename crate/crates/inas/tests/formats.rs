use std::fs;

use inas::{checkpoint, loaders, AppError};
use inas_core::arch::{ArchPoint, BlockKind, BlockSpec};
use inas_core::data::{self, InputShape};
use inas_core::nn::{self, NetworkSpec};

#[test]
fn csv_labels_are_remapped_densely() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("digits.csv");
    fs::write(&path, "x0,label,x1\n0.5,7,1\n-1,3,2.25\n3,7,0\n").unwrap();
    let d = loaders::load_csv(&path).unwrap();
    assert_eq!(d.name, "digits");
    assert_eq!((d.len(), d.dim(), d.n_classes()), (3, 2, 2));
    assert_eq!(d.labels(), &[1, 0, 1]);
    assert_eq!(d.class_values(), &[3, 7]);
    assert_eq!(d.features(), &[0.5, 1.0, -1.0, 2.25, 3.0, 0.0]);
}

#[test]
fn csv_errors_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("no_label.csv", "a,b\n1,2\n"),
        ("text.csv", "a,label\nx,1\n"),
        ("float_label.csv", "a,label\n1,0.5\n"),
        ("empty.csv", "a,label\n"),
        ("ragged.csv", "a,label\n1,0\n2\n"),
    ];
    for (name, body) in cases {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        let err = loaders::load_csv(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{name}: {err}");
    }
    assert!(matches!(loaders::load_csv(dir.path().join("missing.csv")), Err(AppError::Csv { .. } | AppError::Io { .. })));
}

fn tiny_images() -> data::Dataset {
    let shape = InputShape::Image { height: 2, width: 3, channels: 1 };
    let features: Vec<f32> = (0..4 * 6).map(|v| (v * 11 % 256) as f32 / 255.0).collect();
    data::Dataset::with_class_values("imgs", shape, features, vec![0, 2, 1, 2], 3, vec![1, 4, 9]).unwrap()
}

#[test]
fn idx_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lbl) = (dir.path().join("imgs-images.idx"), dir.path().join("imgs-labels.idx"));
    let d = tiny_images();
    loaders::write_idx(&d, &img, &lbl).unwrap();
    let back = loaders::load_idx(&img, &lbl).unwrap();
    assert_eq!(back.shape(), d.shape());
    assert_eq!(back.labels(), d.labels());
    assert_eq!(back.class_values(), d.class_values());
    assert_eq!(back.features(), d.features());
    let header = fs::read(&img).unwrap();
    assert_eq!(&header[..16], &[0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 3]);
}

#[test]
fn idx_rejects_truncation_magic_and_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lbl) = (dir.path().join("a.idx"), dir.path().join("b.idx"));
    loaders::write_idx(&tiny_images(), &img, &lbl).unwrap();
    let good = fs::read(&img).unwrap();

    fs::write(&img, &good[..good.len() - 1]).unwrap();
    assert!(loaders::load_idx(&img, &lbl).unwrap_err().to_string().contains("truncated"));

    fs::write(&img, &good).unwrap();
    assert!(loaders::load_idx(&lbl, &img).unwrap_err().to_string().contains("magic"));

    let mut labels = fs::read(&lbl).unwrap();
    labels[7] = 3;
    labels.pop();
    fs::write(&lbl, &labels).unwrap();
    assert!(matches!(loaders::load_idx(&img, &lbl), Err(AppError::Data(_))));
}

#[test]
fn flat_data_cannot_be_written_as_idx() {
    let dir = tempfile::tempdir().unwrap();
    let d = data::synth_blobs(2, 3, 4, 1.0, 0).unwrap();
    assert!(loaders::write_idx(&d, dir.path().join("i"), dir.path().join("l")).is_err());
    assert!(loaders::reshape(d.clone(), InputShape::Image { height: 2, width: 2, channels: 1 }).is_err());
    let r = loaders::reshape(d, InputShape::Image { height: 1, width: 3, channels: 1 }).unwrap();
    assert_eq!(r.dim(), 3);
}

fn models() -> Vec<nn::ModelHandle> {
    let dense = NetworkSpec::new(
        ArchPoint::new(2, 2),
        BlockSpec::reference(BlockKind::ResidualDense, 6),
        InputShape::Flat { dim: 4 },
        3,
        0.1,
    )
    .unwrap();
    let conv = NetworkSpec::new(
        ArchPoint::new(1, 2),
        BlockSpec::reference(BlockKind::ResidualConv, 4),
        InputShape::Image { height: 6, width: 6, channels: 2 },
        5,
        0.0,
    )
    .unwrap();
    vec![nn::instantiate(&dense, 3).unwrap(), nn::instantiate(&conv, 4).unwrap()]
}

#[test]
fn checkpoint_round_trip_preserves_parameters_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    for (k, model) in models().into_iter().enumerate() {
        let path = dir.path().join(format!("m{k}.ckpt"));
        checkpoint::save(&model, &path).unwrap();
        let back = checkpoint::load(&path).unwrap();
        assert_eq!(back.spec(), model.spec());
        let as_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        assert_eq!(as_f32(back.params()), as_f32(model.params()));
        assert_eq!(as_f32(back.buffers()), as_f32(model.buffers()));
        assert_eq!(checkpoint::encode(&back), checkpoint::encode(&model));

        let dim = model.spec().input_shape.len();
        let x: Vec<f32> = (0..3 * dim).map(|v| (v as f32 * 0.37).sin()).collect();
        let (p, q) = (model.predict_proba(&x).unwrap(), back.predict_proba(&x).unwrap());
        let diff = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-5, "prediction drift {diff}");
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let model = &models()[0];
    let bytes = checkpoint::encode(model);
    assert!(checkpoint::decode(&bytes[..bytes.len() - 4]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(checkpoint::decode(&extra).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(checkpoint::decode(&magic).is_err());
    assert!(checkpoint::decode(&[]).is_err());
}
