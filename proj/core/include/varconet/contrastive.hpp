#pragma once

#include <string>
#include <vector>

#include "varconet/dataio.hpp"
#include "varconet/types.hpp"

namespace varconet {

struct Segment {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

struct SegmentPair {
  Segment view_a;
  Segment view_b;
  std::size_t recording = 0;
};

// Two independent crops: length uniform on [l_min, min(l_max, T)], start
// uniform on [0, T - length]. Throws BoundsError when T < l_min.
SegmentPair sample_segment_pair(Eigen::Index t, int l_min, int l_max, Rng& rng);

// Recording indices of one contrastive batch; no subject appears twice.
struct ContrastBatch {
  std::vector<std::size_t> recordings;
  std::vector<std::string> subject_ids;
};

// One epoch of batches. Recordings are shuffled, then greedily packed;
// a recording whose subject already sits in the open batch waits for a later
// batch. A trailing batch with fewer than 2 recordings is dropped.
std::vector<ContrastBatch> make_batches(const Cohort& cohort, int batch_size, Rng& rng);

// Same, over an explicit subset of recording indices.
std::vector<ContrastBatch> make_batches(const Cohort& cohort, const std::vector<std::size_t>& pool,
                                        int batch_size, Rng& rng);

// Padded views for a batch: inputs[i] and inputs[i + N] are the two views of
// recording i.
struct ContrastInputs {
  std::vector<Matrix> views;  // 2N matrices R x length
  std::vector<SegmentPair> pairs;
};

ContrastInputs sample_views(const Cohort& cohort, const ContrastBatch& batch, int l_min, int l_max,
                            Rng& rng);

struct NtXentResult {
  double loss = 0.0;
  std::vector<Vector> grad;  // dL/dz_i
};

// NT-Xent over 2N embeddings where z[i] and z[i + N] form the positive
// pairs. Loss is the mean of l(i, j) over all 2N ordered positive pairs.
NtXentResult ntxent_loss(const std::vector<Vector>& z, double tau);

}  // namespace varconet
