#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "posekit/heatmap.hpp"
#include "posekit/metrics.hpp"
#include "posekit/model.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

// ---------------------------------------------------------------------------
// Tensor files: magic "PHT1", u8 rank (4), u32 LE dims, f64 LE values.
// Round trips are bit exact. Errors: BadMagicError, TruncatedFileError,
// DimOverflowError.
// ---------------------------------------------------------------------------

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// COCO-style keypoint documents
// ---------------------------------------------------------------------------

struct CocoLoadReport {
    int64_t loaded = 0;
    int64_t skipped = 0;
    std::vector<std::string> skip_reasons;
};

/// Parses {"annotations": [{id, keypoints (3*17 numbers), area, bbox,
/// score?}]}. Malformed entries are skipped and counted in the report.
std::vector<EvalInstance> load_coco_keypoints(const std::filesystem::path& path,
                                              CocoLoadReport* report = nullptr);

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

struct DatasetManifest {
    int64_t format_version = 1;
    int64_t samples = 0;
    int input_h = 0;
    int input_w = 0;
    int channels = 0;
    int joints = 0;
    double sigma = 2.0;
    uint64_t seed = 0;
};

struct SampleRecord {
    int64_t id = 0;
    Tensor input;      // 1 x C x H x W
    KeypointSet kps;   // crop space (== input pixel space)
    BBox bbox;         // padded keypoint box used as the OKS area source
    AffineTransform crop_to_image; // identity for synthetic data
};

/// Draws a skeleton chain with well-separated joints inside the margins.
KeypointSet sample_skeleton(std::mt19937_64& rng, int joints, int h, int w);

/// Deterministic input renderer: channel 0 carries limb ridges along the
/// joint chain, channel 1 Gaussian blobs at the joints (so locations are
/// recoverable from the input), further channels a blend. With one channel
/// everything is blended into it.
Tensor render_sample_input(const KeypointSet& kps, int channels, int h, int w);

/// Index of the blob channel for a given channel count.
int blob_channel_index(int channels);

/// Writes manifest.txt, keypoints.txt and samples/NNNNNN.pht under dir.
/// Reproducible: the same seed produces identical files.
void synth_generate(const std::filesystem::path& dir, int64_t n, const ModelConfig& config,
                    uint64_t seed);

DatasetManifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);

/// "NNNNNN.pht" name of a sample tensor under samples/.
std::string sample_filename(int64_t index);

std::vector<KeypointSet> load_keypoint_records(const std::filesystem::path& dir,
                                               const DatasetManifest& manifest);

SampleRecord load_sample(const std::filesystem::path& dir, const DatasetManifest& manifest,
                         int64_t index);

/// Padded bounding box of the labeled joints (degenerate extents floored at
/// one pixel); the instance box stored with each synthetic sample.
BBox keypoint_bbox(const KeypointSet& kps, double padding);

} // namespace posekit
