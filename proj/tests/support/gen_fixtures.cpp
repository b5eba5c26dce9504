// Regenerates tests/fixtures/corpus from the synthetic generator.
#include <iostream>

#include "fixture_corpus.hpp"
#include "patchforge/io.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_fixtures <tests/fixtures dir>\n";
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  const auto corpus = pftest::make_fixture_corpus(dir / "listings");
  patchforge::write_file(dir / "corpus" / "events.jsonl", corpus.events);
  patchforge::write_file(dir / "corpus" / "testset.jsonl", corpus.testset);
  return 0;
}
