//! End-to-end smoke tests: synthetic data through training and refinement.

use spxrefine_core::classifier::{train_with_features, TrainConfig};
use spxrefine_core::dataset::{build_training_set, DatasetItem};
use spxrefine_core::featurizer::FeatureStackConfig;
use spxrefine_core::groundtruth::{synth_generate, SynthConfig};
use spxrefine_core::metrics::mask_iou;
use spxrefine_core::refine::{refine_image, PostConfig};
use spxrefine_core::sampling::MASK_SIDE;
use spxrefine_core::segmentation::{ScaleConfig, SegMethod};

fn items_of(ds: &spxrefine_core::groundtruth::SynthDataset) -> Vec<DatasetItem> {
    ds.items
        .iter()
        .map(|i| DatasetItem {
            stem: i.name.clone(),
            image: i.image.clone(),
            gts: i.gts.clone(),
            proposals: i.proposals.clone(),
        })
        .collect()
}

fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        epochs: 10,
        minibatch: 32,
        hidden_widths: vec![16, 16],
        d_out: 8,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn train_then_refine_smoke() {
    let synth = SynthConfig { images: 8, shapes_per_image: 2, seed: 21, ..Default::default() };
    let ds = synth_generate(&synth).unwrap();
    let items = items_of(&ds);
    let scale_cfg = ScaleConfig::with_base(240);
    let feature_cfg = FeatureStackConfig::default();

    let set = build_training_set(&items, &scale_cfg, SegMethod::Fh, &feature_cfg).unwrap();
    let model = train_with_features(&set, &tiny_train_config(), feature_cfg).unwrap();
    assert!(
        model.stats.epoch_loss.last().unwrap() < model.stats.epoch_loss.first().unwrap(),
        "training loss did not decrease: {:?}",
        model.stats.epoch_loss
    );

    let post = PostConfig::default();
    let item = &items[0];
    let refined =
        refine_image(&item.image, &item.proposals, &model, &post, &scale_cfg, SegMethod::Fh)
            .unwrap();
    assert!(!refined.is_empty());
    // sorted by descending score, masks decode to image size
    for w in refined.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    for r in &refined {
        let mask = r.rle.decode().unwrap();
        assert_eq!(mask.width, item.image.width);
        assert_eq!(mask.height, item.image.height);
    }

    // determinism
    let again =
        refine_image(&item.image, &item.proposals, &model, &post, &scale_cfg, SegMethod::Fh)
            .unwrap();
    assert_eq!(refined, again);

    // refined proposals should track the annotations on easy synthetic data
    let mut mean_refined = 0.0;
    for (gt, _) in item.gts.iter().zip(&item.proposals) {
        let mut best = 0.0f64;
        for r in &refined {
            best = best.max(mask_iou(&r.rle.decode().unwrap(), &gt.mask).unwrap());
        }
        mean_refined += best;
    }
    mean_refined /= item.gts.len() as f64;
    assert!(mean_refined > 0.5, "refined best-IoU too low: {mean_refined}");
}

#[test]
fn duplicated_proposals_collapse_under_nms() {
    let synth = SynthConfig { images: 2, shapes_per_image: 1, seed: 33, ..Default::default() };
    let ds = synth_generate(&synth).unwrap();
    let items = items_of(&ds);
    let scale_cfg = ScaleConfig::with_base(200);
    let feature_cfg = FeatureStackConfig::default();
    let set = build_training_set(&items, &scale_cfg, SegMethod::Fh, &feature_cfg).unwrap();
    let model = train_with_features(&set, &tiny_train_config(), feature_cfg).unwrap();

    let item = &items[0];
    let mut doubled = item.proposals.clone();
    doubled.extend(item.proposals.clone());

    let with_nms = PostConfig::default();
    let without = PostConfig { nms: false, ..Default::default() };
    let kept =
        refine_image(&item.image, &doubled, &model, &with_nms, &scale_cfg, SegMethod::Fh).unwrap();
    let all =
        refine_image(&item.image, &doubled, &model, &without, &scale_cfg, SegMethod::Fh).unwrap();
    assert_eq!(all.len(), doubled.len());
    assert!(kept.len() < all.len(), "nms kept everything");
    assert_eq!(kept.len(), item.proposals.len());
}

#[test]
fn zero_mask_proposal_refines_to_empty() {
    // A model whose decisions are driven by the mask prior: trained on rows
    // where the prior alone determines the label and the feature columns are
    // noise. A proposal with an all-zero coarse mask then refines to an
    // empty mask.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut set = spxrefine_core::classifier::TrainingSet {
        d_raw: spxrefine_core::featurizer::RAW_CHANNELS,
        ..Default::default()
    };
    for i in 0..600 {
        let y = (i % 2) as u8;
        set.priors.push(if y == 1 {
            rng.random_range(0.4..1.0)
        } else {
            rng.random_range(0.0..0.15)
        });
        for _ in 0..set.d_raw {
            set.raw.push(rng.random_range(-1.5..1.5));
        }
        set.labels.push(y);
    }
    let model = train_with_features(
        &set,
        &TrainConfig {
            learning_rate: 0.3,
            epochs: 20,
            minibatch: 32,
            hidden_widths: vec![16],
            d_out: 8,
            seed: 9,
            ..Default::default()
        },
        FeatureStackConfig::default(),
    )
    .unwrap();

    let synth = SynthConfig { images: 1, shapes_per_image: 2, seed: 55, ..Default::default() };
    let ds = synth_generate(&synth).unwrap();
    let items = items_of(&ds);
    let scale_cfg = ScaleConfig::with_base(240);

    let item = &items[0];
    let mut zeroed = item.proposals[0].clone();
    zeroed.mask40 = vec![0.0; MASK_SIDE * MASK_SIDE];
    let post = PostConfig { nms: false, ..Default::default() };
    let refined =
        refine_image(&item.image, &[zeroed], &model, &post, &scale_cfg, SegMethod::Fh).unwrap();
    assert_eq!(refined.len(), 1);
    let mask = refined[0].rle.decode().unwrap();
    assert_eq!(mask.area(), 0, "all-zero prior should classify as background");
}

#[test]
fn all_stages_off_is_plain_rendering() {
    let synth = SynthConfig { images: 4, shapes_per_image: 2, seed: 77, ..Default::default() };
    let ds = synth_generate(&synth).unwrap();
    let items = items_of(&ds);
    let scale_cfg = ScaleConfig::with_base(240);
    let feature_cfg = FeatureStackConfig::default();
    let set = build_training_set(&items, &scale_cfg, SegMethod::Fh, &feature_cfg).unwrap();
    let model = train_with_features(&set, &tiny_train_config(), feature_cfg).unwrap();

    let off = PostConfig {
        bilateral: false,
        morphology: false,
        nms: false,
        ..Default::default()
    };
    let item = &items[1];
    let refined =
        refine_image(&item.image, &item.proposals, &model, &off, &scale_cfg, SegMethod::Fh)
            .unwrap();
    assert_eq!(refined.len(), item.proposals.len());

    // identical to manually rendering classifier outputs
    use spxrefine_core::pooling::{pool_mask_prior, pool_mean_forward};
    use spxrefine_core::refine::render_mask;
    use spxrefine_core::sampling::{assemble_batch, crop_segmentation};
    use std::collections::BTreeMap;

    let level = scale_cfg.level(item.proposals[0].scale_id).unwrap();
    let seg = spxrefine_core::segmentation::segment_to_target_count(
        &item.image,
        SegMethod::Fh,
        level.target_superpixels,
    )
    .unwrap();
    let map = spxrefine_core::featurizer::scale_feature_map(
        &item.image,
        ScaleConfig::image_downsample(level.factor),
        &model.feature_cfg,
    )
    .unwrap();
    let raw = pool_mean_forward(&map, &seg).unwrap();
    let projected = model.project(&raw).unwrap();
    let mut tables = BTreeMap::new();
    tables.insert(level.factor, projected);

    let p = &item.proposals[0];
    let crop = crop_segmentation(&seg, &p.window).unwrap();
    let prior = pool_mask_prior(&p.mask40, MASK_SIDE, &p.window, &seg, &crop.ids).unwrap();
    let batch =
        assemble_batch(std::slice::from_ref(p), std::slice::from_ref(&crop), &[prior], &tables, None).unwrap();
    let probs = model.classify(&batch).unwrap();
    let mask = render_mask(&seg, &crop.ids, &probs, model.threshold).unwrap();
    let from_pipeline = refined
        .iter()
        .find(|r| r.source_id == 0)
        .unwrap()
        .rle
        .decode()
        .unwrap();
    assert_eq!(mask, from_pipeline);
}
