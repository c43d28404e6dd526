use super::llm::FrameImage;
use crate::error::{Error, Result};
use crate::media::Y4mReader;
use crate::segment::ActionSegment;

/// Seconds of video per LLM request.
pub const CHUNK_SECONDS: usize = 45;

/// 1 fps sample of up to 45 s of a sub-clip.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoChunkFrames {
    pub segment_id: String,
    pub chunk_index: usize,
    pub frames: Vec<FrameImage>,
}

/// Frame indices sampled at one per second, split into 45-sample chunks; the last
/// chunk holds the remainder.
pub fn chunk_plan(frame_count: u64, fps: f64) -> Result<Vec<Vec<u64>>> {
    if !(fps > 0.0) {
        return Err(Error::media(format!("invalid frame rate {fps}")));
    }
    if frame_count == 0 {
        return Ok(Vec::new());
    }
    let duration = frame_count as f64 / fps;
    let seconds = (duration - 1e-9).ceil().max(1.0) as u64;
    let samples: Vec<u64> = (0..seconds).map(|s| ((s as f64 * fps).round() as u64).min(frame_count - 1)).collect();
    Ok(samples.chunks(CHUNK_SECONDS).map(<[u64]>::to_vec).collect())
}

/// Keeps `cap` evenly spaced elements when there are more than `cap`.
pub fn thin_uniform<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    (0..cap).map(|j| items[j * items.len() / cap].clone()).collect()
}

/// Supplies the sampled frames of a segment's sub-clip.
pub trait FrameSource {
    fn chunks(&mut self, segment_id: &str, segment: &ActionSegment, max_frames: usize) -> Result<Vec<VideoChunkFrames>>;
}

/// Reads frames from the `.y4m` sub-clip referenced by each segment.
#[derive(Debug, Default, Clone, Copy)]
pub struct SubclipFrames;

impl FrameSource for SubclipFrames {
    fn chunks(&mut self, segment_id: &str, segment: &ActionSegment, max_frames: usize) -> Result<Vec<VideoChunkFrames>> {
        let uri = segment
            .subclip_uri
            .as_ref()
            .ok_or_else(|| Error::media(format!("segment {segment_id} has no sub-clip")))?;
        let mut reader = Y4mReader::open(uri)?;
        let plan = chunk_plan(reader.frame_count() as u64, reader.header().fps())?;
        plan.into_iter()
            .enumerate()
            .map(|(chunk_index, indices)| {
                let frames = thin_uniform(&indices, max_frames)
                    .into_iter()
                    .map(|i| Ok(FrameImage { frame_index: i, png: reader.read_rgb(i as usize)?.to_png()? }))
                    .collect::<Result<Vec<_>>>()?;
                Ok(VideoChunkFrames { segment_id: segment_id.to_string(), chunk_index, frames })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_chunk_counts() {
        let sizes = |secs: u64| chunk_plan(secs * 30, 30.0).unwrap().iter().map(Vec::len).collect::<Vec<_>>();
        let long = sizes(600);
        assert_eq!(long.len(), 14);
        assert_eq!(*long.last().unwrap(), 15);
        assert_eq!(sizes(30), [30]);
        assert_eq!(sizes(45), [45]);
        assert_eq!(sizes(46), [45, 1]);
    }

    #[test]
    fn samples_are_one_second_apart() {
        let plan = chunk_plan(95, 30.0).unwrap();
        assert_eq!(plan, [vec![0, 30, 60, 90]]);
        assert!(chunk_plan(10, 0.0).is_err());
        assert!(chunk_plan(0, 30.0).unwrap().is_empty());
    }

    #[test]
    fn thinning_is_uniform() {
        let v: Vec<u32> = (0..10).collect();
        assert_eq!(thin_uniform(&v, 5), [0, 2, 4, 6, 8]);
        assert_eq!(thin_uniform(&v, 20), v);
    }
}
