#include <algorithm>
#include <map>
#include <tuple>

#include "dictllm/tokenizer.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dictllm;

namespace {

LabReportSet two_pair_report() {
    LabReportSet r;
    r.dictionaries.push_back({{{"glucose", LabValue::numeric(5.0, 3.0, 7.0)},
                               {"urea", LabValue::numeric(9.0, 3.0, 7.0)}},
                              std::nullopt});
    return r;
}

LabReportSet two_dict_report() {
    LabReportSet r;
    r.dictionaries.push_back({{{"a", LabValue::numeric(5.0, 3.0, 7.0)}}, std::nullopt});
    r.dictionaries.push_back({{{"b", LabValue::qualitative("positive")}}, std::nullopt});
    return r;
}

}  // namespace

TEST_CASE("build_vocab: reserved block plus one id per distinct key") {
    LabReportSet r1, r2;
    r1.dictionaries.push_back({{{"glucose", LabValue::numeric(1.0)}}, std::nullopt});
    r2.dictionaries.push_back({{{"urea", LabValue::numeric(1.0)},
                                {"glucose", LabValue::numeric(2.0)}},
                               std::nullopt});
    Vocabulary vocab = build_vocab({r1, r2});
    CHECK(vocab.size() == 18);  // 4 reserved + 12 labels + 2 keys
    CHECK(vocab.id_of("[CLS]") == Vocabulary::kClsId);
    CHECK(vocab.id_of("glucose") == Vocabulary::kFirstKeyId);
    CHECK(vocab.id_of("urea") == Vocabulary::kFirstKeyId + 1);
    for (int i = 0; i < vocab.size(); ++i) CHECK(vocab.id_of(vocab.token_of(i)) == i);

    CHECK_THROWS(build_vocab({}));
}

TEST_CASE("vocabulary file round-trip") {
    Vocabulary vocab = build_vocab({two_pair_report()});
    const std::string path = "test_vocab.json";
    vocab.save(path);
    Vocabulary back = Vocabulary::load(path);
    CHECK(back.size() == vocab.size());
    for (int i = 0; i < vocab.size(); ++i) CHECK(back.token_of(i) == vocab.token_of(i));
    std::remove(path.c_str());
}

TEST_CASE("tokenize: layout and lengths") {
    Vocabulary vocab = build_vocab({two_pair_report(), two_dict_report()});

    EncodedReport empty = tokenize(LabReportSet{}, vocab);
    REQUIRE(empty.size() == 1);
    CHECK(empty.token_ids[0] == Vocabulary::kClsId);
    CHECK(empty.segment_ids[0] == 0);  // reserved segment k = 0

    // 1 dictionary x 2 pairs: [CLS] k1 v1 k2 v2 [SEP]
    EncodedReport e = tokenize(two_pair_report(), vocab);
    REQUIRE(e.size() == 6);
    CHECK(e.token_ids[0] == Vocabulary::kClsId);
    CHECK(e.token_ids[1] == vocab.id_of("glucose"));
    CHECK(e.token_ids[2] == Vocabulary::label_id(MedicalLabel::kNormal));
    CHECK(e.token_ids[3] == vocab.id_of("urea"));
    CHECK(e.token_ids[4] == Vocabulary::label_id(MedicalLabel::kHiNormal));
    CHECK(e.token_ids[5] == Vocabulary::kSepId);
    CHECK(e.group_pos_ids == std::vector<int>{0, 0, 1, 0, 1, 0});
    CHECK(e.segment_ids == std::vector<int>{1, 0, 0, 0, 0, 0});
    CHECK(e.is_special == std::vector<bool>{true, false, false, false, false, true});

    // 2 dictionaries x 1 pair: [CLS] k1 v1 [SEP] k2 v2 [SEP]
    EncodedReport e2 = tokenize(two_dict_report(), vocab);
    REQUIRE(e2.size() == 7);
    CHECK(e2.segment_ids == std::vector<int>{2, 0, 0, 0, 1, 1, 1});
    CHECK(e2.group_pos_ids == std::vector<int>{0, 0, 1, 0, 0, 1, 0});

    // Unknown key maps to [UNK].
    LabReportSet unk;
    unk.dictionaries.push_back({{{"mystery", LabValue::numeric(1.0)}}, std::nullopt});
    CHECK(tokenize(unk, vocab).token_ids[1] == Vocabulary::kUnkId);
}

TEST_CASE("group_positions: rule enumeration and recomputation") {
    Vocabulary vocab = build_vocab({two_pair_report()});
    EncodedReport e = tokenize(two_pair_report(), vocab);
    CHECK(group_positions(e) == e.group_pos_ids);

    LabReportSet single;
    single.dictionaries.push_back({{{"glucose", LabValue::numeric(5.0, 3.0, 7.0)}},
                                   std::nullopt});
    EncodedReport es = tokenize(single, vocab);
    CHECK(es.group_pos_ids == std::vector<int>{0, 0, 1, 0});
}

TEST_CASE("tokenize: output length formula and determinism") {
    Rng rng(77);
    Vocabulary vocab;
    for (int k = 0; k < 12; ++k) vocab.add_key("key" + std::to_string(k));
    for (int i = 0; i < 100; ++i) {
        LabReportSet report = testutil::random_report(rng);
        EncodedReport e = tokenize(report, vocab);
        size_t expected = 1;
        for (const auto& d : report.dictionaries) expected += 2 * d.pairs.size() + 1;
        CHECK(e.size() == expected);
        CHECK(e.group_pos_ids.size() == e.size());
        CHECK(e.segment_ids.size() == e.size());
        CHECK(e.is_special.size() == e.size());
        EncodedReport again = tokenize(report, vocab);
        CHECK(again.token_ids == e.token_ids);
        // Segment ids non-decreasing over non-special tokens.
        int last = -1;
        for (size_t t = 0; t < e.size(); ++t) {
            if (e.is_special[t]) continue;
            CHECK(e.segment_ids[t] >= last);
            last = e.segment_ids[t];
        }
    }
}

TEST_CASE("within-dictionary permutation preserves per-segment triple multisets") {
    Rng rng(31);
    Vocabulary vocab;
    for (int k = 0; k < 12; ++k) vocab.add_key("key" + std::to_string(k));
    for (int trial = 0; trial < 50; ++trial) {
        LabReportSet report = testutil::random_report(rng);
        LabReportSet shuffled = report;
        for (auto& d : shuffled.dictionaries) rng.shuffle(d.pairs);

        auto per_segment = [&](const LabReportSet& r) {
            EncodedReport e = tokenize(r, vocab);
            std::map<int, std::vector<std::tuple<int, int>>> seg;
            for (size_t i = 0; i < e.size(); ++i)
                seg[e.segment_ids[i]].emplace_back(e.token_ids[i], e.group_pos_ids[i]);
            for (auto& [k, v] : seg) std::sort(v.begin(), v.end());
            return seg;
        };
        CHECK(per_segment(report) == per_segment(shuffled));
    }
}
