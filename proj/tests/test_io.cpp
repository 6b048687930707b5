#include "vinegof/errors.hpp"
#include "vinegof/io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace vinegof;
namespace fs = std::filesystem;

namespace {

RVineModel model3() {
    const auto s = RVineStructure::from_edges(
        3, {VineEdge(1, 2), VineEdge(2, 3), VineEdge(1, 3, {2})});
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.5321}},
        {BicopFamily{FamilyKind::Clayton, Rotation::R90}, {2.25}},
        {BicopFamily{FamilyKind::StudentT, Rotation::R0}, {-0.4, 7.5}},
    };
    return RVineModel(s, pcs);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string all((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    return all;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vinegof_io_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    static int counter() {
        static int c = 0;
        return c++;
    }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
};

void expect_parse_error(const std::string& text, const std::string& needle) {
    try {
        parse_vine_text(text);
        FAIL_CHECK("expected ParseError for: " << text);
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        INFO("message: " << msg);
        CHECK(msg.find(needle) != std::string::npos);
    }
}

} // namespace

TEST_CASE("model files roundtrip through format and parse") {
    const auto m = model3();
    const std::string text = format_model(m);
    const auto vf = parse_vine_text(text);
    CHECK(vf.has_families);
    CHECK(vf.has_params);
    CHECK(vf.structure.all_edges() == m.structure().all_edges());
    REQUIRE(vf.specs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& orig = m.pair_copula(static_cast<int>(i));
        CHECK(vf.specs[i].family == orig.family);
        REQUIRE(vf.specs[i].params.size() == orig.params.size());
        for (std::size_t k = 0; k < orig.params.size(); ++k)
            CHECK(vf.specs[i].params[k] == orig.params[k]); // bit-exact
    }
}

TEST_CASE("structure and skeleton files parse without parameters") {
    const auto m = model3();
    const auto vs = parse_vine_text(format_structure(m.structure()));
    CHECK_FALSE(vs.has_families);
    CHECK_FALSE(vs.has_params);
    CHECK(vs.structure.all_edges() == m.structure().all_edges());

    std::vector<BicopFamily> fams;
    for (int i = 0; i < 3; ++i) fams.push_back(m.pair_copula(i).family);
    const auto vk = parse_vine_text(format_skeleton(m.structure(), fams));
    CHECK(vk.has_families);
    CHECK_FALSE(vk.has_params);
    REQUIRE(vk.families.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(vk.families[i] == fams[i]);
}

TEST_CASE("loading a model insists on parameters") {
    TempDir td;
    const auto m = model3();
    save_text(format_skeleton(m.structure(), {m.pair_copula(0).family,
                                              m.pair_copula(1).family,
                                              m.pair_copula(2).family}),
              td.file("skel.vine"));
    CHECK_THROWS_AS(load_model(td.file("skel.vine")), ParseError);
    save_text(format_model(m), td.file("full.vine"));
    const auto back = load_model(td.file("full.vine"));
    CHECK(back.num_params() == m.num_params());
    CHECK((back.parameters() - m.parameters()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the parser reports offending lines") {
    const std::string ok =
        "d=3\n"
        "tree=1 cond=1,2 given=\n"
        "tree=1 cond=2,3 given=\n"
        "tree=2 cond=1,3 given=2\n";
    CHECK_NOTHROW(parse_vine_text(ok));

    expect_parse_error("", "header");
    expect_parse_error("d=x\n", "dimension");
    expect_parse_error("d=1\n", "d");
    expect_parse_error("tree=1 cond=1,2 given=\n", "header");
    expect_parse_error("d=3\ntree=1 cond=1,2\n", "line 2");
    expect_parse_error("d=3\ncond=1,2 given=\n", "line 2");
    expect_parse_error("d=3\ntree=1 cond=1 given=\n", "line 2");
    expect_parse_error("d=3\ntree=1 cond=1,1 given=\n", "line 2");
    expect_parse_error("d=3\ntree=1 cond=1,7 given=\n", "line 2");
    expect_parse_error("d=3\ntree=1 cond=1,2 given=1\n", "line 2");
    expect_parse_error("d=3\ntree=2 cond=1,2 given=\n", "line 2");
    expect_parse_error("d=3\ntree=1 cond=1,2 given= tree=1\n", "duplicate");
    expect_parse_error("d=3\ntree=1 cond=1,2 given= shape=x\n", "unknown");
    expect_parse_error(
        "d=3\ntree=1 cond=1,2 given= family=galois params=1\n", "family");
    expect_parse_error(
        "d=3\ntree=1 cond=1,2 given= params=0.5\n", "family");
    expect_parse_error(
        "d=3\ntree=1 cond=1,2 given= family=gauss params=1.5\n"
        "tree=1 cond=2,3 given= family=gauss params=0.5\n"
        "tree=2 cond=1,3 given=2 family=gauss params=0.5\n",
        "line 2");
    // mixing specified and unspecified families
    expect_parse_error(
        "d=3\n"
        "tree=1 cond=1,2 given= family=gauss params=0.5\n"
        "tree=1 cond=2,3 given=\n"
        "tree=2 cond=1,3 given=2 family=gauss params=0.5\n",
        "family");
    // duplicate edge
    expect_parse_error(
        "d=3\n"
        "tree=1 cond=1,2 given=\n"
        "tree=1 cond=2,1 given=\n"
        "tree=2 cond=1,3 given=2\n",
        "duplicate");
    // not a valid vine (wrong edge count)
    CHECK_THROWS_AS(parse_vine_text("d=3\ntree=1 cond=1,2 given=\n"),
                    ParseError);
}

TEST_CASE("comments and blank lines are ignored") {
    const std::string text =
        "# a vine\n"
        "\n"
        "d=3   # dimension\n"
        "tree=1 cond=1,2 given=   # first pair\n"
        "tree=1 cond=2,3 given=\n"
        "\n"
        "tree=2 cond=1,3 given=2\n";
    const auto vf = parse_vine_text(text);
    CHECK(vf.structure.dim == 3);
    CHECK_FALSE(vf.has_families);
}

TEST_CASE("missing files carry the path in the error") {
    try {
        load_vine_file("/nonexistent/vine.txt");
        FAIL_CHECK("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("/nonexistent/vine.txt") !=
              std::string::npos);
    }
    CHECK_THROWS_AS(load_sample_csv("/nonexistent/sample.csv"), ParseError);
}

TEST_CASE("sample csv roundtrips at full precision") {
    TempDir td;
    const auto m = model3();
    const auto s = m.simulate(64, 99991);
    save_sample_csv(s, td.file("s.csv"));
    const std::string first_line = slurp(td.file("s.csv")).substr(0, 9);
    CHECK(first_line == "u1,u2,u3\n");
    const auto back = load_sample_csv(td.file("s.csv"));
    REQUIRE(back.n() == s.n());
    REQUIRE(back.d() == s.d());
    CHECK((back.u - s.u).cwiseAbs().maxCoeff() == 0.0); // bit-exact
}

TEST_CASE("sample csv validates the unit cube") {
    TempDir td;
    save_text("u1,u2\n0.5,1.5\n", td.file("bad.csv"));
    CHECK_THROWS_AS(load_sample_csv(td.file("bad.csv")), DomainError);
    save_text("u1,u2\n0.5,0.0\n", td.file("bad2.csv"));
    CHECK_THROWS_AS(load_sample_csv(td.file("bad2.csv")), DomainError);
}

TEST_CASE("matrix csv rejects malformed input") {
    TempDir td;
    save_text("a,b\n1,2\n3\n", td.file("ragged.csv"));
    CHECK_THROWS_AS(load_matrix_csv(td.file("ragged.csv")), ParseError);
    save_text("a,b\n", td.file("norows.csv"));
    CHECK_THROWS_AS(load_matrix_csv(td.file("norows.csv")), ParseError);
    // a numeric first line is data, not a header
    save_text("0.1,0.2\n0.3,0.4\n", td.file("noheader.csv"));
    try {
        load_matrix_csv(td.file("noheader.csv"));
        FAIL_CHECK("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("header") != std::string::npos);
    }
    save_text("a,b\n1,x\n", td.file("notnum.csv"));
    CHECK_THROWS_AS(load_matrix_csv(td.file("notnum.csv")), ParseError);
}

TEST_CASE("headerless matrix csv loads when asked") {
    TempDir td;
    save_text("0.25,0.5\n0.75,0.125\n", td.file("plain.csv"));
    const auto m = load_matrix_csv(td.file("plain.csv"), /*header=*/false);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 0.25);
    CHECK(m(1, 1) == 0.125);
}

TEST_CASE("gof result json carries every field") {
    GofResult r;
    r.statistic = 12.5;
    r.dof = 6;
    r.p_asymptotic = 0.0513;
    r.regularized = true;
    r.v_condition = 123.4;
    r.n = 500;
    r.p = 3;
    const auto j1 = nlohmann::json::parse(gof_result_json(r));
    CHECK(j1.at("statistic").get<double>() == doctest::Approx(12.5));
    CHECK(j1.at("dof").get<int>() == 6);
    CHECK(j1.at("p_asymptotic").get<double>() == doctest::Approx(0.0513));
    CHECK(j1.at("p_bootstrap").is_null());
    CHECK(j1.at("regularized").get<bool>());
    CHECK(j1.at("v_condition").get<double>() == doctest::Approx(123.4));
    CHECK(j1.at("n").get<int>() == 500);
    CHECK(j1.at("p").get<int>() == 3);
    CHECK(j1.at("B").is_null());
    CHECK(j1.at("N").is_null());
    CHECK(j1.at("seed").is_null());

    r.p_bootstrap = 0.08;
    r.bootstrap_B = 200;
    r.bootstrap_N = 500;
    r.seed = 42;
    const auto j2 = nlohmann::json::parse(gof_result_json(r));
    CHECK(j2.at("p_bootstrap").get<double>() == doctest::Approx(0.08));
    CHECK(j2.at("B").get<int>() == 200);
    CHECK(j2.at("N").get<int>() == 500);
    CHECK(j2.at("seed").get<std::uint64_t>() == 42);
}

TEST_CASE("fit report json computes the information criteria") {
    const auto j = nlohmann::json::parse(
        fit_report_json("m.vine", 123.456, 4, 1000, true, 17));
    CHECK(j.at("model").get<std::string>() == "m.vine");
    CHECK(j.at("loglik").get<double>() == doctest::Approx(123.456));
    CHECK(j.at("num_params").get<int>() == 4);
    CHECK(j.at("n").get<int>() == 1000);
    CHECK(j.at("aic").get<double>() ==
          doctest::Approx(-2 * 123.456 + 2 * 4).epsilon(1e-12));
    CHECK(j.at("bic").get<double>() ==
          doctest::Approx(-2 * 123.456 + 4 * std::log(1000.0)).epsilon(1e-12));
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("iterations").get<int>() == 17);
}

TEST_CASE("margins json lists one entry per column") {
    const std::vector<MarginalModel> ms = {
        {MarginFamily::Normal, {0.0, 1.0}},
        {MarginFamily::Exponential, {2.0}},
    };
    const auto j = nlohmann::json::parse(margins_json(ms));
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2);
    CHECK(j[0].at("column").get<int>() == 1);
    CHECK(j[0].at("family").get<std::string>() == "normal");
    CHECK(j[0].at("params")[1].get<double>() == doctest::Approx(1.0));
    CHECK(j[1].at("family").get<std::string>() == "exponential");
}

TEST_CASE("study outputs land in the requested directory") {
    const auto s = RVineStructure::from_edges(2, {VineEdge(1, 2)});
    const std::vector<BicopSpec> pcs = {
        {BicopFamily{FamilyKind::Gauss, Rotation::R0}, {0.45}}};
    StudyConfig cfg;
    cfg.name = "io_smoke";
    cfg.m1 = RVineModel(s, pcs);
    cfg.n = 120;
    cfg.R = 4;
    cfg.pre_n = 150;
    cfg.seed = 11;
    AlternativeSpec alt;
    alt.name = "Gauss";
    alt.kind = AlternativeSpec::Kind::GaussPaired;
    cfg.alternatives = {alt};
    const auto res = run_study(cfg);

    TempDir td;
    const std::string outdir = (td.path / "out").string();
    write_study_outputs(res, outdir);
    REQUIRE(fs::exists(fs::path(outdir) / "statistics.csv"));
    REQUIRE(fs::exists(fs::path(outdir) / "curves.csv"));
    REQUIRE(fs::exists(fs::path(outdir) / "study.json"));

    const std::string stats = slurp((fs::path(outdir) / "statistics.csv").string());
    CHECK(stats.rfind("replicate,arm,t,p_asy,p_sim\n", 0) == 0);
    const std::string curves = slurp((fs::path(outdir) / "curves.csv").string());
    CHECK(curves.rfind("alpha,", 0) == 0);
    CHECK(curves.find("F_M1") != std::string::npos);
    CHECK(curves.find("F_Gauss") != std::string::npos);

    const auto j = nlohmann::json::parse(
        slurp((fs::path(outdir) / "study.json").string()));
    CHECK(j.at("study").get<std::string>() == "io_smoke");
    CHECK(j.at("n").get<int>() == 120);
    CHECK(j.at("R").get<int>() == 4);
    CHECK(j.at("seed").get<std::uint64_t>() == 11);
    REQUIRE(j.at("arms").is_array());
    CHECK(j.at("arms").size() == 2);
    REQUIRE(j.at("summary").is_array());
    for (const auto& row : j.at("summary")) {
        CHECK(row.contains("arm"));
        CHECK(row.at("power").contains("0.05"));
    }
}
