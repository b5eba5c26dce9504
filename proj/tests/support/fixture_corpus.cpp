#include "fixture_corpus.hpp"

#include "patchforge/io.hpp"
#include "patchforge/records.hpp"
#include "synthetic.hpp"

namespace pftest {

namespace pf = patchforge;

namespace {

pf::PushEvent listing_event(const std::filesystem::path& dir, const std::string& id,
                            const std::string& repo, const std::string& sha,
                            const std::string& message, const std::string& stem,
                            const std::string& path) {
  pf::PushEvent ev{id, repo, {}};
  pf::CommitRef c{sha, message, {}};
  c.changed_files.push_back({path, pf::read_file(dir / (stem + "_before.c")),
                             pf::read_file(dir / (stem + "_after.c"))});
  ev.commits.push_back(std::move(c));
  return ev;
}

pf::VulnerableFunction as_vulnerable(const pf::FunctionPair& p) {
  return {p.name, p.origin.path, p.before_tokens, p.after_tokens};
}

}  // namespace

FixtureCorpus make_fixture_corpus(const std::filesystem::path& listings_dir) {
  Archive a = synthetic_archive({198, 2019});
  std::vector<pf::PushEvent> events = std::move(a.events);
  events.push_back(listing_event(listings_dir, "8000000001", "torvalds/linux",
                                 "a6a3db2b6bd3e3cebd6fa7a5c8e46aa1a2a1e1b1",
                                 "cifs: fix NULL pointer bug in cifs_close", "cifs_file",
                                 "fs/cifs/file.c"));
  events.push_back(listing_event(listings_dir, "8000000002", "torvalds/linux",
                                 "30572418b445d85fcfe6c8fe84c947d2606767d8",
                                 "USB: serial: omninet: fix reference leak error", "omninet",
                                 "drivers/usb/serial/omninet.c"));

  FixtureCorpus out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    out.events += pf::to_json_line(events[i]) + "\n";
    if (i == 57) out.events += "{\"event_id\":\"corrupt\",\"repo\":\"x/y\",\"commits\":[{\"sha\":\n";
  }

  std::vector<pf::VulnerabilityRecord> vulns;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& ev = events[events.size() - 2 + k];
    pf::CommitRecord rec{ev.event_id, ev.repo, ev.commits[0], pf::classify_commit(ev.commits[0].message)};
    const pf::CommitExtraction ex = pf::extract_commit(rec);
    pf::VulnerabilityRecord v{k == 0 ? "CVE-2011-1771" : "CVE-2017-8925", {}};
    for (const auto& p : ex.pairs) v.functions.push_back(as_vulnerable(p));
    vulns.push_back(std::move(v));
  }
  // Seen fixes, taken from the archive, and unseen ones.
  Rng rng(4004);
  const auto unseen = edit_pairs(24, 100, 8658);
  std::size_t seen_at = 0, unseen_at = 0;
  for (int i = 0; i < 28; ++i) {
    pf::VulnerabilityRecord v{"CVE-2018-" + std::to_string(10000 + i * 7), {}};
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.below(2) == 0 && seen_at < a.fix_pairs.size())
        v.functions.push_back(as_vulnerable(a.fix_pairs[seen_at++ * 3 % a.fix_pairs.size()]));
      else if (unseen_at < unseen.size())
        v.functions.push_back(as_vulnerable(unseen[unseen_at++]));
    }
    if (!v.functions.empty()) vulns.push_back(std::move(v));
  }
  for (const auto& v : vulns) out.testset += pf::to_json_line(v) + "\n";
  return out;
}

}  // namespace pftest
