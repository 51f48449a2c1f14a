use crate::data::{Dataset, LabeledSample};
use crate::error::Result;
use crate::student::StudentModel;
use crate::teacher::{Judged, Partition};

/// A sample is correct when the student predicts its gold label with
/// probability at least `threshold`; every other sample is wrong.
/// Both sides keep input order.
pub fn identify(model: &StudentModel, data: &Dataset, threshold: f64) -> Result<Partition> {
    identify_samples(model, data.samples(), threshold)
}

pub fn identify_samples(model: &StudentModel, samples: &[LabeledSample], threshold: f64) -> Result<Partition> {
    let task = model.task();
    let mut partition = Partition::default();
    for (index, sample) in samples.iter().enumerate() {
        let prediction = model.predict(&sample.text)?;
        let gold = task.label_index(&sample.label);
        let gold_probability = gold.map_or(0.0, |g| prediction.distribution[g]);
        let judged = Judged {
            index,
            sample: sample.clone(),
            predicted: prediction.label,
            gold_probability,
        };
        if gold == Some(prediction.label_index) && gold_probability >= threshold {
            partition.correct.push(judged);
        } else {
            partition.wrong.push(judged);
        }
    }
    Ok(partition)
}
