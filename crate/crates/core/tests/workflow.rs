use nalgebra::{DMatrix, DVector};

use spikelda::classify::kclass::fit_kclass;
use spikelda::classify::pclda::Selection;
use spikelda::data::{load_csv, save_csv, train_test_split, LabeledDataset, DEFAULT_LABEL_COLUMN};
use spikelda::model_io::ModelDocument;
use spikelda::rng::stream_rng;
use spikelda::sim::gen_model1;
use spikelda::tuning::{tune_and_fit, DPolicy, SPolicy};
use spikelda::whitening::{fit_spiked, pooled_covariance, Whiten, WhiteningOperator};

fn two_class(p: usize, n1: usize, n2: usize, seed: u64) -> LabeledDataset {
    let pop = gen_model1(p, 0.5).unwrap();
    let x = pop.sample(n1, n2, &mut stream_rng(seed, 0)).unwrap();
    let labels = (0..n1 + n2)
        .map(|i| if i < n1 { "ALL" } else { "AML" }.to_string())
        .collect();
    LabeledDataset::new(x, labels).unwrap()
}

#[test]
fn csv_fit_save_load_predict() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    save_csv(&two_class(120, 60, 50, 1), &path, DEFAULT_LABEL_COLUMN).unwrap();
    let data = load_csv(&path, DEFAULT_LABEL_COLUMN).unwrap();
    assert_eq!((data.n(), data.p()), (110, 120));

    let (train, test) = train_test_split(&data, 0.3, 5, true).unwrap();
    let fit = tune_and_fit(&train, DPolicy::default(), SPolicy::default(), 9).unwrap();
    let model = &fit.model;
    assert!(!model.selected().is_empty() && model.selected().len() <= 30);

    let pred = model.predict_rows(test.features()).unwrap();
    let errors = pred
        .iter()
        .zip(test.labels())
        .filter(|(&c, l)| model.classes()[c] != **l)
        .count();
    // ‖ζ‖ ≈ 4.4, so the Bayes risk is about 1.3%.
    assert!(errors * 5 <= test.n(), "{errors}/{}", test.n());

    let file = dir.path().join("model.json");
    ModelDocument::from_model(model, Some(train.feature_names()))
        .save(&file)
        .unwrap();
    let doc = ModelDocument::load(&file).unwrap();
    assert_eq!(doc.feature_names.as_deref(), Some(train.feature_names()));
    let again = doc.to_model().unwrap();
    assert_eq!(again.predict_rows(test.features()).unwrap(), pred);
    for i in 0..test.n() {
        let z = test.row(i);
        assert_eq!(
            again.score(&z).unwrap().to_bits(),
            model.score(&z).unwrap().to_bits()
        );
    }
}

#[test]
fn fitted_whitener_decorrelates_large_samples() {
    let data = two_class(30, 3000, 3000, 2);
    let stats = pooled_covariance(&data).unwrap();
    let w = WhiteningOperator::new(fit_spiked(&stats, 1).unwrap());
    let white = w.whiten_rows(data.features()).unwrap();
    let ds = LabeledDataset::new(white, data.labels().to_vec()).unwrap();
    let cov = pooled_covariance(&ds).unwrap().sigma_hat();
    let dev = cov.as_matrix() - DMatrix::<f64>::identity(30, 30);
    // Σ̂ equals its spiked fit along the spike, so only the bulk is off by sampling noise.
    assert!(dev.amax() < 0.15, "{}", dev.amax());
}

#[test]
fn three_classes_separate() {
    let pop = gen_model1(60, 0.5).unwrap();
    let mut rng = stream_rng(3, 0);
    let n = 80;
    let mut x = DMatrix::zeros(3 * n, 60);
    let mut labels = Vec::new();
    for (k, name) in ["a", "b", "c"].iter().enumerate() {
        let block = pop.sample(n, 0, &mut rng).unwrap();
        let mut shift = DVector::zeros(60);
        if k > 0 {
            shift.rows_mut(10 * (k - 1), 10).fill(1.5);
        }
        for i in 0..n {
            x.set_row(k * n + i, &(block.row(i) + shift.transpose()));
            labels.push(name.to_string());
        }
    }
    let data = LabeledDataset::new(x, labels).unwrap();
    let (train, test) = train_test_split(&data, 0.25, 4, true).unwrap();
    let model = fit_kclass(&train, 1, &[Selection::TopS { s: 10 }]).unwrap();
    assert_eq!(model.classes(), ["a", "b", "c"]);
    let pred = model.predict_rows(test.features()).unwrap();
    let errors = pred
        .iter()
        .zip(test.class_ordinals())
        .filter(|(a, b)| a != b)
        .count();
    assert!(errors * 10 <= test.n(), "{errors}/{}", test.n());
    let union = model.selected_union();
    assert!(union.iter().filter(|&&j| j < 20).count() >= 18, "{union:?}");
}
