#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctrgan/sequence.hpp"

namespace ctrgan::gait {

// One sequence entry in a dataset manifest.
struct SequenceRef {
  std::string subject_id;
  std::string view;
  int frame_count = 0;
  double fps = 20.0;
  std::string role = "train";  // train | test
  bool has_rgb = false;
};

// Dataset layout on disk:
//   root/<subject_id>/<view>/frame_%06d.pam   (+ rgb_%06d.ppm when paired)
//   root/manifest                              (JSON index)
struct DatasetManifest {
  std::filesystem::path root;
  int bitdepth = 8;
  std::vector<SequenceRef> sequences;

  const SequenceRef* find(const std::string& subject_id,
                          const std::string& view) const;
  std::vector<std::string> subject_ids() const;
  std::vector<const SequenceRef*> sequences_of(const std::string& subject_id) const;
};

std::filesystem::path sequence_dir(const std::filesystem::path& root,
                                   const std::string& subject_id,
                                   const std::string& view);

// Writes every frame of seq under dir (created if needed).
void save_sequence(const GaitSequence& seq, const std::filesystem::path& dir,
                   int bitdepth = 8);

// Loads frame_%06d files from dir. Numbering must be gap-free from 0; a gap
// or dimension mismatch raises DataError naming the offending file.
GaitSequence load_sequence(const std::filesystem::path& dir,
                           const std::string& subject_id = "",
                           const std::string& view = "", double fps = 20.0);

void write_manifest(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& root);

// Saves sequences into the documented layout and writes the manifest.
void save_dataset(const std::vector<GaitSequence>& seqs,
                  const std::filesystem::path& root, int bitdepth = 8,
                  const std::vector<std::string>& roles = {});

// Loads every sequence listed by the manifest, validating that files exist
// and that no sequence is listed twice.
std::vector<GaitSequence> load_dataset(const DatasetManifest& m);
GaitSequence load_dataset_sequence(const DatasetManifest& m, const SequenceRef& ref);

// Content hash of the manifest text; identifies the dataset in reports.
std::string dataset_hash(const DatasetManifest& m);

}  // namespace ctrgan::gait
