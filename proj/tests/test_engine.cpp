#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <random>

#include "emofuse/engine.hpp"
#include "emofuse/fixture.hpp"
#include "test_util.hpp"

using namespace emofuse;

namespace {

TrainConfig toy_config(Task task, uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.branches = {"toy_rand_16", "toy_rand_16", "toy_rand_16"};
    cfg.task = task;
    cfg.epochs = 3;
    cfg.lr0 = 0.01;
    cfg.seed = seed;
    return cfg;
}

// One fixture + face cache shared by the engine tests in this binary.
struct SharedFixture {
    test_util::TempDir data{"engine_data"};
    test_util::TempDir faces{"engine_faces"};
    AnnotationTable table;
    std::unique_ptr<ImageStore> store;
    std::unique_ptr<FaceCache> cache;

    SharedFixture() {
        table = generate_fixture(60, 5, data.path()).table;
        store = std::make_unique<ImageStore>(data.path());
        build_face_cache(table, *store, StubDetector::none(), faces.path());
        cache = std::make_unique<FaceCache>(faces.path());
    }
};

SharedFixture& fixture() {
    static SharedFixture f;
    return f;
}

}  // namespace

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;
    cfg.lr0 = 0.005;
    for (int e = 0; e <= 6; ++e) CHECK(lr_at(e, cfg) == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(lr_at(7, cfg) == doctest::Approx(0.0045).epsilon(1e-12));
    CHECK(lr_at(13, cfg) == doctest::Approx(0.0045).epsilon(1e-12));
    CHECK(lr_at(14, cfg) == doctest::Approx(0.00405).epsilon(1e-12));

    // non-increasing, and exactly floor((epochs-1)/7) decays across a run
    const int epochs = 40;
    int decays = 0;
    for (int e = 1; e < epochs; ++e) {
        CHECK(lr_at(e, cfg) <= lr_at(e - 1, cfg));
        if (lr_at(e, cfg) < lr_at(e - 1, cfg)) ++decays;
    }
    CHECK(decays == (epochs - 1) / 7);
    CHECK_THROWS_AS(lr_at(-1, cfg), Error);
}

TEST_CASE("sgd_step worked cases") {
    SUBCASE("momentum zero reduces to plain SGD") {
        Tensor p(1, 1), g(1, 1), v(1, 1);
        p.v[0] = 1.0;
        g.v[0] = 0.5;
        sgd_step(p, g, v, 0.1, 0.0);
        CHECK(p.v[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
    }

    SUBCASE("zero gradients are a fixed point") {
        Tensor p(2, 2), g(2, 2), v(2, 2);
        p.v = {1, 2, 3, 4};
        for (int i = 0; i < 10; ++i) sgd_step(p, g, v, 0.1, 0.9);
        CHECK(p.v == std::vector<double>{1, 2, 3, 4});
    }

    SUBCASE("two steps of constant gradient accumulate 2.9 lr g") {
        Tensor p(1, 1), g(1, 1), v(1, 1);
        g.v[0] = 2.0;
        const double lr = 0.1;
        sgd_step(p, g, v, lr, 0.9);
        sgd_step(p, g, v, lr, 0.9);
        CHECK(p.v[0] == doctest::Approx(-2.9 * lr * 2.0).epsilon(1e-12));
    }

    SUBCASE("shape mismatch and non-finite gradients are rejected") {
        Tensor p(1, 2), g(2, 1), v(1, 2);
        CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 0.9), Error);
        Tensor g2(1, 2), v2(1, 2);
        g2.v[0] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(sgd_step(p, g2, v2, 0.1, 0.9), Error);
    }
}

TEST_CASE("training is deterministic and keeps branches frozen") {
    auto& f = fixture();
    test_util::TempDir out1("train1"), out2("train2");
    const BranchRegistry registry;
    const TrainConfig cfg = toy_config(Task::discrete);

    const TrainResult r1 = train(f.table, *f.store, f.cache.get(), cfg, registry, out1.path());
    const TrainResult r2 = train(f.table, *f.store, f.cache.get(), cfg, registry, out2.path());

    CHECK(r1.last.params.digest() == r2.last.params.digest());
    CHECK(r1.best.params.digest() == r2.best.params.digest());
    CHECK(r1.log.to_csv(false) == r2.log.to_csv(false));  // seconds column excluded
    CHECK(r1.branch_digest_before == r1.branch_digest_after);

    // per-epoch logs are contiguous from 0
    for (int e = 0; e < cfg.epochs; ++e) CHECK(r1.log.epochs[e].epoch == e);

    // a different seed changes the outcome
    const TrainResult r3 =
        train(f.table, *f.store, f.cache.get(), toy_config(Task::discrete, 2), registry,
              out1.path());
    CHECK(r3.last.params.digest() != r1.last.params.digest());
}

TEST_CASE("discrete task never touches the continuous head") {
    auto& f = fixture();
    test_util::TempDir out("train");
    const BranchRegistry registry;
    const TrainResult r =
        train(f.table, *f.store, f.cache.get(), toy_config(Task::discrete), registry,
              out.path());
    const FusionParams fresh = init_fusion(r.last.params.config);
    CHECK(r.last.params.cont_head_digest() == fresh.cont_head_digest());
    CHECK(r.last.params.disc_head_digest() != fresh.disc_head_digest());
}

TEST_CASE("continuous task never touches the discrete head") {
    auto& f = fixture();
    test_util::TempDir out("train");
    const BranchRegistry registry;
    const TrainResult r =
        train(f.table, *f.store, f.cache.get(), toy_config(Task::continuous), registry,
              out.path());
    const FusionParams fresh = init_fusion(r.last.params.config);
    CHECK(r.last.params.disc_head_digest() == fresh.disc_head_digest());
    CHECK(r.last.params.cont_head_digest() != fresh.cont_head_digest());
}

TEST_CASE("train rejects impossible inputs") {
    auto& f = fixture();
    test_util::TempDir out("train");
    const BranchRegistry registry;

    TrainConfig cfg = toy_config(Task::discrete);
    cfg.branches = {};
    CHECK_THROWS_AS(train(f.table, *f.store, f.cache.get(), cfg, registry, out.path()), Error);

    AnnotationTable no_train = f.table;
    for (auto& r : no_train.rows) r.split = Split::test;
    CHECK_THROWS_AS(train(no_train, *f.store, f.cache.get(), toy_config(Task::discrete),
                          registry, out.path()),
                    Error);

    // face branch active but no cache provided
    CHECK_THROWS_AS(
        train(f.table, *f.store, nullptr, toy_config(Task::discrete), registry, out.path()),
        Error);
}

TEST_CASE("mean train loss drops on the fixture") {
    test_util::TempDir data("learn_data"), faces("learn_faces"), out("learn_out");
    const auto gen = generate_fixture(200, 1, data.path());
    const ImageStore store(data.path());
    build_face_cache(gen.table, store, StubDetector::none(), faces.path());
    const FaceCache cache(faces.path());
    const BranchRegistry registry;

    TrainConfig cfg = toy_config(Task::discrete, 1);
    cfg.epochs = 3;
    const TrainResult r = train(gen.table, store, &cache, cfg, registry, out.path());
    CHECK(r.log.epochs.back().train_loss < r.log.epochs.front().train_loss);
}

TEST_CASE("checkpoint round-trip reproduces evaluation bit for bit") {
    auto& f = fixture();
    test_util::TempDir out("ckpt");
    const BranchRegistry registry;
    const TrainResult r =
        train(f.table, *f.store, f.cache.get(), toy_config(Task::joint), registry, out.path());

    const Checkpoint loaded = load_checkpoint(r.best_path);
    CHECK(loaded.params.digest() == r.best.params.digest());
    CHECK(loaded.config == r.best.config);
    CHECK(loaded.bound_branches == r.best.bound_branches);
    CHECK(loaded.epoch == r.best.epoch);
    CHECK(loaded.thresholds.has_value());

    const EvalReport a =
        evaluate(r.best, f.table, *f.store, f.cache.get(), Split::test, registry);
    const EvalReport b =
        evaluate(loaded, f.table, *f.store, f.cache.get(), Split::test, registry);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("evaluate requires a populated split") {
    auto& f = fixture();
    test_util::TempDir out("ckpt");
    const BranchRegistry registry;
    const TrainResult r = train(f.table, *f.store, f.cache.get(),
                                toy_config(Task::discrete), registry, out.path());
    AnnotationTable only_train = f.table;
    for (auto& row : only_train.rows) row.split = Split::train;
    CHECK_THROWS_AS(
        evaluate(r.best, only_train, *f.store, f.cache.get(), Split::test, registry), Error);
}

TEST_CASE("oracle predictions give mAP 1 and MAE 0 through the seam") {
    auto& f = fixture();
    const auto test_rows = f.table.row_indices(Split::test);
    const auto val_rows = f.table.row_indices(Split::val);
    REQUIRE(!test_rows.empty());

    std::vector<std::array<double, 26>> disc(test_rows.size());
    std::vector<std::array<double, 3>> vad(test_rows.size());
    for (size_t i = 0; i < test_rows.size(); ++i) {
        const auto& row = f.table.rows[test_rows[i]];
        for (int c = 0; c < 26; ++c) disc[i][c] = row.discrete.bits[c] ? 1.0 : 0.0;
        vad[i] = row.vad.as_array();
    }
    std::vector<std::array<double, 26>> val_disc(val_rows.size());
    for (size_t i = 0; i < val_rows.size(); ++i)
        for (int c = 0; c < 26; ++c)
            val_disc[i][c] = f.table.rows[val_rows[i]].discrete.bits[c] ? 1.0 : 0.0;

    const EvalReport report = evaluate_scored(f.table, Split::test, disc, vad, Split::val,
                                              val_disc, {"a", "b", "c"});
    CHECK(report.map == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.mae.mean == 0.0);
    for (const auto& c : report.per_category)
        if (c.ap.has_value()) CHECK(*c.ap == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random scores score close to mean category prevalence") {
    // a larger split keeps the finite-sample bias of random-ranking AP small
    test_util::TempDir data("rand_data");
    const auto gen = generate_fixture(400, 1, data.path());
    const auto test_rows = gen.table.row_indices(Split::test);
    const auto val_rows = gen.table.row_indices(Split::val);

    double prevalence_sum = 0.0;
    int prevalence_n = 0;
    for (int c = 0; c < 26; ++c) {
        int pos = 0;
        for (int r : test_rows) pos += gen.table.rows[r].discrete.bits[c];
        if (pos > 0) {
            prevalence_sum += double(pos) / test_rows.size();
            ++prevalence_n;
        }
    }
    const double prevalence = prevalence_sum / prevalence_n;

    double map_sum = 0.0;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n_seeds = 10;
    for (int s = 0; s < n_seeds; ++s) {
        std::vector<std::array<double, 26>> disc(test_rows.size());
        std::vector<std::array<double, 3>> vad(test_rows.size(), {5, 5, 5});
        for (auto& row : disc)
            for (double& v : row) v = unit(rng);
        std::vector<std::array<double, 26>> val_disc(val_rows.size());
        for (auto& row : val_disc)
            for (double& v : row) v = unit(rng);
        const EvalReport report = evaluate_scored(gen.table, Split::test, disc, vad,
                                                  Split::val, val_disc, {"-", "-", "-"});
        map_sum += report.map;
    }
    CHECK(std::abs(map_sum / n_seeds - prevalence) < 0.05);
}

TEST_CASE("constant midpoint prediction reproduces the direct MAE computation") {
    auto& f = fixture();
    const auto test_rows = f.table.row_indices(Split::test);
    const auto val_rows = f.table.row_indices(Split::val);

    std::vector<std::array<double, 26>> disc(test_rows.size());
    for (auto& row : disc) row.fill(0.5);
    std::vector<std::array<double, 26>> val_disc(val_rows.size());
    for (auto& row : val_disc) row.fill(0.5);
    std::vector<std::array<double, 3>> vad(test_rows.size(), {5.0, 5.0, 5.0});

    // scores are constant, so every category with a positive still has a defined AP
    const EvalReport report = evaluate_scored(f.table, Split::test, disc, vad, Split::val,
                                              val_disc, {"-", "-", "-"});

    std::array<double, 3> expected{};
    for (int r : test_rows) {
        const auto t = f.table.rows[r].vad.as_array();
        for (int d = 0; d < 3; ++d) expected[d] += std::abs(t[d] - 5.0);
    }
    for (int d = 0; d < 3; ++d) expected[d] /= test_rows.size();
    for (int d = 0; d < 3; ++d)
        CHECK(report.mae.per_dim[d] == doctest::Approx(expected[d]).epsilon(1e-12));
}

TEST_CASE("predict: decisions follow stored thresholds, vad clamped, deterministic") {
    auto& f = fixture();
    test_util::TempDir out("ckpt");
    const BranchRegistry registry;
    const TrainResult r = train(f.table, *f.store, f.cache.get(),
                                toy_config(Task::joint), registry, out.path());
    REQUIRE(r.best.thresholds.has_value());

    const auto& row = f.table.rows[0];
    const Image image = f.store->load(row.image_id);
    const PredictionRecord a =
        predict(r.best, image, row.body_box, StubDetector::none(), registry);
    const PredictionRecord b =
        predict(r.best, image, row.body_box, StubDetector::none(), registry);
    CHECK(a.disc_scores == b.disc_scores);
    CHECK(a.vad_pred == b.vad_pred);

    REQUIRE(a.disc_decisions.has_value());
    for (int i = 0; i < 26; ++i)
        CHECK((*a.disc_decisions)[i] == (a.disc_scores[i] >= (*r.best.thresholds)[i] ? 1 : 0));
    for (double v : a.vad_pred) {
        CHECK(v >= 0.0);
        CHECK(v <= 10.0);
    }

    // without thresholds, decisions are omitted but scores remain
    Checkpoint stripped = r.best;
    stripped.thresholds.reset();
    const PredictionRecord c =
        predict(stripped, image, row.body_box, StubDetector::none(), registry);
    CHECK_FALSE(c.disc_decisions.has_value());
    CHECK(c.disc_scores == a.disc_scores);

    const std::string json = a.to_json();
    CHECK(json.find("vad_pred") != std::string::npos);
}

TEST_CASE("run config files parse and apply") {
    test_util::TempDir dir("cfg");
    test_util::write_file(dir / "run.cfg",
                          "# desk-scale run\n"
                          "task = continuous\n"
                          "epochs = 9\n"
                          "lr0 = 0.025\n"
                          "body_backbone = toy_rand_8\n"
                          "branches = body,face\n"
                          "theta = 0.05\n");
    const auto kv = parse_kv_file(dir / "run.cfg");
    TrainConfig cfg;
    for (const auto& [k, v] : kv) apply_config_entry(cfg, k, v);
    CHECK(cfg.task == Task::continuous);
    CHECK(cfg.epochs == 9);
    CHECK(cfg.lr0 == 0.025);
    CHECK(cfg.theta == 0.05);
    CHECK(cfg.branches.body == "toy_rand_8");
    CHECK(cfg.branches.context.empty());       // not listed in branches
    CHECK(cfg.branches.face == "toy_rand_16");  // listed, defaulted

    CHECK_THROWS_AS(apply_config_entry(cfg, "nonsense", "1"), Error);
    CHECK_THROWS_AS(apply_config_entry(cfg, "epochs", "many"), Error);
    CHECK_THROWS_AS(parse_kv_file(dir / "absent.cfg"), Error);
}

TEST_CASE("ablation: every non-empty branch subset trains and evaluates") {
    auto& f = fixture();
    const BranchRegistry registry;
    const std::string toy = "toy_rand_8";
    int combos = 0;
    for (int mask = 1; mask < 8; ++mask) {
        TrainConfig cfg;
        cfg.branches.body = (mask & 1) ? toy : "";
        cfg.branches.context = (mask & 2) ? toy : "";
        cfg.branches.face = (mask & 4) ? toy : "";
        cfg.task = Task::joint;
        cfg.epochs = 2;
        cfg.lr0 = 0.01;
        cfg.seed = mask;
        test_util::TempDir out("ablate");
        const TrainResult r =
            train(f.table, *f.store, f.cache.get(), cfg, registry, out.path());
        const EvalReport report =
            evaluate(r.best, f.table, *f.store, f.cache.get(), Split::test, registry);
        CHECK(report.per_category.size() == 26);
        const int expected_dim = 8 * ((mask & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1));
        CHECK(r.best.params.config.input_dim == expected_dim);
        ++combos;
    }
    CHECK(combos == 7);
}
