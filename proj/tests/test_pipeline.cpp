#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "sceneseg/commands.hpp"
#include "sceneseg/io.hpp"
#include "sceneseg/synth.hpp"
#include "sceneseg/timeline.hpp"

using namespace sceneseg;
using sceneseg::test::TempDir;
using sceneseg::test::read_file;
using sceneseg::test::write_temp;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.n_videos = 2;
    spec.n_scenes = 3;
    spec.shots_per_scene_lo = 2;
    spec.shots_per_scene_hi = 4;
    spec.shot_frames_lo = 40;
    spec.shot_frames_hi = 120;
    spec.dim = 6;
    spec.separation = 8.0;
    spec.hist_dim = 4;
    spec.hist_separation = 4.0;
    spec.vocab = 12;
    spec.words_per_shot = 2.0;
    spec.embedding_dim = 5;
    spec.seed = 7;
    return spec;
}

std::string uniform_shots_csv(int n, int frames) {
    std::string out = "index,frame_start,frame_end\n";
    for (int i = 0; i < n; ++i) {
        out += std::to_string(i) + "," + std::to_string(i * frames) + "," +
               std::to_string((i + 1) * frames) + "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("synthetic fixtures") {
    auto spec = small_spec();
    TempDir dir("synth");
    auto ids = generate_fixtures(spec, dir.path());

    CHECK(ids == std::vector<std::string>{"video00", "video01"});
    CHECK(ids == synthetic_video_ids(spec));

    CHECK(video_paths(dir.path(), "v", DescriptorFormat::Binary).visual ==
          dir.path() / "v.visual.bin");

    for (const auto& id : ids) {
        auto paths = video_paths(dir.path(), id);
        auto timeline = parse_shots(paths.shots, spec.fps);
        int n = timeline.shot_count();
        CHECK(n >= spec.n_scenes * spec.shots_per_scene_lo);
        CHECK(n <= spec.n_scenes * spec.shots_per_scene_hi);
        for (const auto& shot : timeline.shots()) {
            CHECK(shot.frame_count() >= spec.shot_frames_lo);
            CHECK(shot.frame_count() <= spec.shot_frames_hi);
        }

        auto scenes = parse_scenes(paths.scenes, timeline);
        CHECK(scenes.scene_count() == spec.n_scenes);
        for (const auto& scene : scenes.scenes()) {
            CHECK(scene.shot_count() >= spec.shots_per_scene_lo);
            CHECK(scene.shot_count() <= spec.shots_per_scene_hi);
        }

        auto visual = load_visual_descriptors(paths.visual, timeline, DescriptorFormat::Csv);
        CHECK(visual.rows() == n);
        CHECK(visual.cols() == spec.dim);

        auto words = parse_transcript(paths.transcript);
        CHECK(!words.empty());

        // planted structure: descriptors sit nearer their own scene
        auto labels = scene_labels(scenes);
        double within = 0.0, across = 0.0;
        int n_within = 0, n_across = 0;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                double d = (visual.row(i) - visual.row(j)).norm();
                if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
                    within += d;
                    ++n_within;
                } else {
                    across += d;
                    ++n_across;
                }
            }
        }
        REQUIRE(n_within > 0);
        REQUIRE(n_across > 0);
        CHECK(within / n_within < across / n_across);
    }

    auto table = load_embedding_table(dir.path() / "embeddings.csv");
    CHECK(table.size() == spec.vocab);
    CHECK(table.dim() == spec.embedding_dim);

    SUBCASE("identical spec writes identical bytes") {
        TempDir again("synth_again");
        generate_fixtures(spec, again.path());
        for (const auto& id : ids) {
            for (const char* suffix :
                 {".shots.csv", ".scenes.csv", ".transcript.csv", ".visual.csv", ".hist.csv"}) {
                CHECK(read_file(dir.path() / (id + suffix)) ==
                      read_file(again.path() / (id + suffix)));
            }
        }
        CHECK(read_file(dir.path() / "embeddings.csv") ==
              read_file(again.path() / "embeddings.csv"));
    }
    SUBCASE("seed changes the data") {
        TempDir other("synth_other");
        auto moved = spec;
        moved.seed = 8;
        generate_fixtures(moved, other.path());
        CHECK(read_file(dir.path() / "video00.visual.csv") !=
              read_file(other.path() / "video00.visual.csv"));
    }
    SUBCASE("spec validation") {
        auto bad = spec;
        bad.n_scenes = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = spec;
        bad.shots_per_scene_lo = 5;
        bad.shots_per_scene_hi = 4;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("train and segment round trip") {
    auto spec = small_spec();
    TempDir dir("pipeline");
    auto ids = generate_fixtures(spec, dir.path());

    TrainCommand train;
    train.data_dir = dir.path();
    train.videos = {ids[0]};
    train.model_out = dir.path() / "model.json";
    train.d_vis = 8;
    train.d_words = 4;
    train.hidden = 6;
    train.features.fps = spec.fps;
    train.train.epochs = 3;
    train.train.batch_size = 4;
    train.train.seed = 11;
    cmd_train(train);

    REQUIRE(std::filesystem::exists(train.model_out));
    auto checkpoint = load_checkpoint(train.model_out);
    CHECK(checkpoint.model.hyper.d_in == spec.dim);
    CHECK(checkpoint.model.hyper.d_vis == 8);
    CHECK(checkpoint.model.hyper.d_words == 4);
    CHECK(checkpoint.model.hyper.h == 6);
    CHECK(checkpoint.codebook.centroids.rows() == 4);
    CHECK(checkpoint.w_min == train.features.w_min);

    // trace defaults next to the model, one row per minibatch
    auto trace_path = dir.path() / "model.trace.csv";
    REQUIRE(std::filesystem::exists(trace_path));
    auto trace = read_file(trace_path);
    auto lines = static_cast<int>(std::count(trace.begin(), trace.end(), '\n'));
    CHECK(trace.rfind("epoch,batch,loss\n", 0) == 0);
    CHECK(lines > 1);
    CHECK((lines - 1) % train.train.epochs == 0);

    SegmentCommand seg;
    seg.data_dir = dir.path();
    seg.video = ids[1];
    seg.model_in = train.model_out;
    seg.scenes_out = dir.path() / "detected.csv";
    seg.similarity_out = dir.path() / "similarity.csv";
    seg.manifest_out = dir.path() / "manifest.json";
    seg.fps = spec.fps;
    seg.spectral.seed = 11;
    cmd_segment(seg);

    auto paths = video_paths(dir.path(), ids[1]);
    auto timeline = parse_shots(paths.shots, spec.fps);
    auto detected = parse_scenes(seg.scenes_out, timeline);
    CHECK(detected.scene_count() >= 1);
    CHECK(detected.shot_count() == timeline.shot_count());

    auto manifest = nlohmann::json::parse(read_file(seg.manifest_out));
    CHECK(manifest["video"] == ids[1]);
    CHECK(manifest["n_shots"] == timeline.shot_count());
    CHECK(manifest["sigma_source"] == "kde");
    CHECK(manifest["k_source"] == "eigengap");
    // k counts clusters; non-contiguous labels can open extra scene runs
    CHECK(detected.scene_count() >= manifest["k"].get<int>());
    CHECK(manifest["sigma"].get<double>() > 0.0);
    CHECK(manifest["eigenvalues"].size() == static_cast<std::size_t>(timeline.shot_count()));

    // similarity CSV is square with unit diagonal
    auto sim = read_file(seg.similarity_out);
    auto sim_lines = static_cast<int>(std::count(sim.begin(), sim.end(), '\n'));
    CHECK(sim_lines == timeline.shot_count());
    CHECK(sim.rfind("1", 0) == 0);

    SUBCASE("segmentation is reproducible byte for byte") {
        SegmentCommand again = seg;
        again.scenes_out = dir.path() / "detected2.csv";
        again.manifest_out = dir.path() / "manifest2.json";
        again.similarity_out.clear();
        cmd_segment(again);
        CHECK(read_file(again.scenes_out) == read_file(seg.scenes_out));
        CHECK(read_file(again.manifest_out) == read_file(seg.manifest_out));
    }
    SUBCASE("explicit k and sigma are honored") {
        SegmentCommand forced = seg;
        forced.scenes_out = dir.path() / "forced.csv";
        forced.manifest_out = dir.path() / "forced.json";
        forced.similarity_out.clear();
        forced.spectral.k = 1;
        forced.spectral.sigma = 0.5;
        cmd_segment(forced);
        auto single = parse_scenes(forced.scenes_out, timeline);
        CHECK(single.scene_count() == 1);
        auto doc = nlohmann::json::parse(read_file(forced.manifest_out));
        CHECK(doc["sigma"] == 0.5);
        CHECK(doc["sigma_source"] == "override");
        CHECK(doc["k"] == 1);
        CHECK(doc["k_source"] == "explicit");
    }
    SUBCASE("pgm similarity output") {
        SegmentCommand img = seg;
        img.scenes_out = dir.path() / "img_scenes.csv";
        img.manifest_out.clear();
        img.similarity_out = dir.path() / "similarity.pgm";
        cmd_segment(img);
        auto pgm = read_file(img.similarity_out);
        CHECK(pgm.rfind("P5\n", 0) == 0);
    }
    SUBCASE("stale model rejects mismatched descriptors") {
        SegmentCommand wrong = seg;
        wrong.video = ids[0];
        wrong.scenes_out = dir.path() / "wrong.csv";
        auto narrow = spec;
        narrow.dim = 3;
        narrow.n_videos = 1;
        TempDir other("narrow");
        generate_fixtures(narrow, other.path());
        wrong.data_dir = other.path();
        CHECK_THROWS_AS(cmd_segment(wrong), std::exception);
        CHECK(!std::filesystem::exists(wrong.scenes_out));
    }
    SUBCASE("no temporary files are left behind") {
        for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
            CHECK(entry.path().extension() != ".tmp");
        }
    }
}

TEST_CASE("evaluate command") {
    TempDir dir("evaluate");
    auto shots = write_temp(dir, "a.shots.csv", uniform_shots_csv(4, 100));
    auto gt = write_temp(dir, "a.scenes.csv", "2\n");
    auto merged = write_temp(dir, "a.detected.csv", "");

    EvaluateCommand cmd;
    cmd.shots = {shots};
    cmd.gt = {gt};
    cmd.detected = {merged};
    cmd.report_out = dir.path() / "report.json";
    auto average = cmd_evaluate(cmd);

    // both ground-truth scenes fully covered but swallowed by one detection
    CHECK(average.cov_ovf.coverage == 1.0);
    CHECK(average.cov_ovf.overflow == 1.0);
    CHECK(average.cov_ovf.f_co == 0.0);
    CHECK(average.m_iou == doctest::Approx(0.5).epsilon(1e-12));

    auto doc = nlohmann::json::parse(read_file(cmd.report_out));
    REQUIRE(doc["videos"].size() == 1);
    const auto& row = doc["videos"][0];
    CHECK(row["video"] == "a.shots");
    CHECK(row["f_co"] == 0.0);
    REQUIRE(row["per_scene"].size() == 2);
    for (const auto& scene : row["per_scene"]) {
        CHECK(scene["coverage"] == 1.0);
        CHECK(scene["overflow"] == 1.0);
        CHECK(scene["best_iou"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(doc["average"]["m_iou"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));

    SUBCASE("dataset average is the unweighted mean") {
        auto shots_b = write_temp(dir, "b.shots.csv", uniform_shots_csv(4, 100));
        auto gt_b = write_temp(dir, "b.scenes.csv", "2\n");
        auto exact = write_temp(dir, "b.detected.csv", "2\n");
        cmd.shots.push_back(shots_b);
        cmd.gt.push_back(gt_b);
        cmd.detected.push_back(exact);
        cmd.report_out = dir.path() / "report2.json";
        auto avg = cmd_evaluate(cmd);
        CHECK(avg.video_id == "average");
        CHECK(avg.cov_ovf.f_co == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(avg.m_iou == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(avg.cov_ovf.overflow == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("list lengths must agree") {
        cmd.gt.push_back(gt);
        CHECK_THROWS_AS(cmd_evaluate(cmd), std::invalid_argument);
    }
}

TEST_CASE("baseline command") {
    TempDir dir("baseline");
    write_temp(dir, "clip.shots.csv", uniform_shots_csv(6, 100));
    // disjoint color support between the two halves
    write_temp(dir, "clip.hist.csv",
               "4,0\n4,0\n4,0\n0,2\n0,2\n0,2\n");

    BaselineCommand cmd;
    cmd.data_dir = dir.path();
    cmd.video = "clip";
    cmd.scenes_out = dir.path() / "baseline.csv";
    cmd.time_weight = 0.0;
    cmd_baseline(cmd);

    CHECK(read_file(cmd.scenes_out) == "3\n");

    SUBCASE("determinism") {
        BaselineCommand again = cmd;
        again.scenes_out = dir.path() / "baseline2.csv";
        cmd_baseline(again);
        CHECK(read_file(again.scenes_out) == read_file(cmd.scenes_out));
    }
    SUBCASE("constant histograms collapse to one scene") {
        TempDir flat("baseline_flat");
        write_temp(flat, "clip.shots.csv", uniform_shots_csv(5, 80));
        write_temp(flat, "clip.hist.csv", "1,1\n1,1\n1,1\n1,1\n1,1\n");
        BaselineCommand constant;
        constant.data_dir = flat.path();
        constant.video = "clip";
        constant.scenes_out = flat.path() / "scenes.csv";
        constant.time_weight = 0.0;
        cmd_baseline(constant);
        CHECK(read_file(constant.scenes_out).empty());
    }
    SUBCASE("histogram row count must match the timeline") {
        TempDir bad("baseline_bad");
        write_temp(bad, "clip.shots.csv", uniform_shots_csv(3, 100));
        write_temp(bad, "clip.hist.csv", "1,0\n0,1\n");
        BaselineCommand broken;
        broken.data_dir = bad.path();
        broken.video = "clip";
        broken.scenes_out = bad.path() / "scenes.csv";
        CHECK_THROWS_AS(cmd_baseline(broken), std::exception);
        CHECK(!std::filesystem::exists(broken.scenes_out));
    }
}

TEST_CASE("training fails cleanly on impossible corpora") {
    // a single one-scene video has no negative pairs to contrast against
    TempDir dir("train_bad");
    write_temp(dir, "solo.shots.csv", uniform_shots_csv(4, 50));
    write_temp(dir, "solo.scenes.csv", "");
    write_temp(dir, "solo.transcript.csv", "token,time\nrock,1.000\n");
    write_temp(dir, "solo.visual.csv", "1,0\n0,1\n1,1\n0.5,0.5\n");
    write_temp(dir, "embeddings.csv", "rock,1,0\nriver,0,1\n");

    TrainCommand train;
    train.data_dir = dir.path();
    train.videos = {"solo"};
    train.model_out = dir.path() / "model.json";
    train.d_vis = 3;
    train.d_words = 2;
    train.hidden = 3;
    train.train.batch_size = 2;
    CHECK_THROWS_AS(cmd_train(train), std::exception);
    CHECK(!std::filesystem::exists(train.model_out));
}
