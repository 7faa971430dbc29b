#include "support/oracles.hpp"

#include <auxlsm/fem.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace auxlsm;

namespace {

HoleSeedConfig<2> centred_hole(double r) {
    HoleSeedConfig<2> s;
    s.holes.push_back({{0.5, 0.5}, r});
    return s;
}

struct Solved2D {
    ControlMesh<2> mesh;
    PeriodicMap pm;
    DesignField field;
    QpField qf;
    CellProblem<2> prob;
};

Solved2D solve_design(int nel, int p, const HoleSeedConfig<2>& seeds, const MaterialModel& mat = {}) {
    Solved2D s;
    s.mesh = build_mesh<2>(nel, p);
    s.pm = build_periodic_map(s.mesh);
    s.field = init_from_holes(s.mesh, seeds, default_smoothing(s.mesh));
    s.qf = evaluate_qp_field(s.field, s.mesh);
    Assembler<2> asmb(s.mesh, s.pm);
    s.prob = asmb.assemble(s.qf, mat);
    solve_full(s.prob, s.pm);
    return s;
}

}  // namespace

TEST(Material, PlaneStressAndIsotropic3D) {
    const MaterialModel m{1.0, 0.3};
    const auto C2 = m.voigt<2>();
    EXPECT_NEAR(C2(0, 0), 1.0 / 0.91, 1e-15);
    EXPECT_NEAR(C2(2, 2), 1.0 / (2 * 1.3), 1e-15);
    const auto C3 = m.voigt<3>();
    EXPECT_NEAR(C3(3, 3), 1.0 / 2.6, 1e-15);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<VoigtMatrix<3>>(C3).eigenvalues().minCoeff(), 0.0);
}

TEST(Assemble, UnconstrainedStiffnessAnnihilatesTranslations) {
    const auto mesh = build_mesh<2>(2, 1);
    const auto pm = build_periodic_map(mesh);
    const auto field = init_from_holes(mesh, HoleSeedConfig<2>::solid(), default_smoothing(mesh));
    Assembler<2> asmb(mesh, pm, /*periodic=*/false);
    const auto prob = asmb.assemble(evaluate_qp_field(field, mesh), MaterialModel{});
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(pm.num_full_dofs());
        for (int I = 0; I < mesh.num_control_points(); ++I) t(2 * I + c) = 1.0;
        EXPECT_LT((prob.K * t).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Assemble, LoadsAreSelfEquilibrated) {
    const auto mesh = build_mesh<2>(8, 2);
    const auto pm = build_periodic_map(mesh);
    const auto field = init_from_holes(mesh, centred_hole(0.2), default_smoothing(mesh));
    Assembler<2> asmb(mesh, pm, false);
    const auto prob = asmb.assemble(evaluate_qp_field(field, mesh), MaterialModel{});
    for (int col = 0; col < 3; ++col)
        for (int c = 0; c < 2; ++c) {
            double s = 0.0;
            for (int I = 0; I < mesh.num_control_points(); ++I) s += prob.F(2 * I + c, col);
            EXPECT_LT(std::abs(s), 1e-9 * prob.F.col(col).norm());
        }
}

TEST(Assemble, VoidIsScaledSolid) {
    const auto mesh = build_mesh<2>(4, 2);
    const auto pm = build_periodic_map(mesh);
    DesignField f;
    f.xi = default_smoothing(mesh);
    f.alpha = Eigen::VectorXd::Constant(mesh.num_control_points(), 3 * f.xi);
    Assembler<2> asmb(mesh, pm);
    const auto solid = asmb.assemble(evaluate_qp_field(f, mesh), MaterialModel{});
    f.alpha.setConstant(-3 * f.xi);
    const auto vd = asmb.assemble(evaluate_qp_field(f, mesh), MaterialModel{});
    const Eigen::MatrixXd diff = Eigen::MatrixXd(vd.K) - 1e-6 * Eigen::MatrixXd(solid.K);
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-15 * Eigen::MatrixXd(solid.K).cwiseAbs().maxCoeff());
}

TEST(Assemble, ParallelMatchesSerial) {
    const auto mesh = build_mesh<2>(12, 2);
    const auto pm = build_periodic_map(mesh);
    const auto field = init_from_holes(mesh, centred_hole(0.3), default_smoothing(mesh));
    const auto qf = evaluate_qp_field(field, mesh);
    Assembler<2> asmb(mesh, pm);
    const auto a = asmb.assemble(qf, MaterialModel{}, 1);
    const auto b = asmb.assemble(qf, MaterialModel{}, 4);
    EXPECT_EQ((Eigen::MatrixXd(a.K) - Eigen::MatrixXd(b.K)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((a.F - b.F).cwiseAbs().maxCoeff(), 0.0);

    auto pa = a;
    solve_full(pa, pm);
    const auto t1 = effective_tensor(mesh, qf, MaterialModel{}, pa.chi, 1, true);
    const auto t4 = effective_tensor(mesh, qf, MaterialModel{}, pa.chi, 4, true);
    EXPECT_EQ((t1.C - t4.C).cwiseAbs().maxCoeff(), 0.0);
    const auto tn = effective_tensor(mesh, qf, MaterialModel{}, pa.chi, 3, false);
    EXPECT_LT((t1.C - tn.C).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Assemble, MatchesDirectBsplineAssembly) {
    for (int nel : {6, 12}) {
        const auto mesh = build_mesh<2>(nel, 2);
        const auto pm = build_periodic_map(mesh);
        const auto field = init_from_holes(mesh, centred_hole(0.27), default_smoothing(mesh));
        Assembler<2> asmb(mesh, pm);
        const auto prob = asmb.assemble(evaluate_qp_field(field, mesh), MaterialModel{});
        const auto ref = oracle::dense_homogenize_2d(nel, 2, field.alpha, field.xi, field.rho_min, 1.0, 0.3);
        const Eigen::MatrixXd K = prob.K;
        EXPECT_LT((K - ref.K).cwiseAbs().maxCoeff(), 1e-11) << nel;
        EXPECT_LT((prob.F - ref.F).cwiseAbs().maxCoeff(), 1e-11) << nel;
    }
}

TEST(SolveFull, SolidCellHasNoCorrector) {
    auto s = solve_design(6, 2, HoleSeedConfig<2>::solid());
    EXPECT_LT(s.prob.chi.cwiseAbs().maxCoeff(), 1e-9);
    const auto t = effective_tensor(s.mesh, s.qf, MaterialModel{}, s.prob.chi);
    const auto C = MaterialModel{}.voigt<2>();
    EXPECT_LT(((t.C - C).array().abs() / C.cwiseAbs().maxCoeff()).maxCoeff(), 1e-8);
    EXPECT_NEAR(t.C(0, 0), 1.0989010989, 1e-8);
}

TEST(SolveFull, ResidualAndDenseOracle) {
    auto s = solve_design(10, 2, centred_hole(0.25));
    for (int c = 0; c < 3; ++c) EXPECT_LE(s.prob.relative_residual(c, s.prob.chi_red.col(c)), 1e-9);
    const auto ref = oracle::dense_homogenize_2d(10, 2, s.field.alpha, s.field.xi, s.field.rho_min, 1.0, 0.3);
    EXPECT_LT((s.prob.chi_red - ref.chi).norm() / ref.chi.norm(), 1e-8);
    const auto t = effective_tensor(s.mesh, s.qf, MaterialModel{}, s.prob.chi);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (std::abs(ref.CH(i, j)) > 1e-8) EXPECT_NEAR(t.C(i, j) / ref.CH(i, j), 1.0, 1e-6);
}

TEST(SolveFull, PcgAgreesWithDirect) {
    const auto mesh = build_mesh<2>(8, 2);
    const auto pm = build_periodic_map(mesh);
    const auto field = init_from_holes(mesh, centred_hole(0.25), default_smoothing(mesh));
    Assembler<2> asmb(mesh, pm);
    auto a = asmb.assemble(evaluate_qp_field(field, mesh), MaterialModel{});
    auto b = a;
    LinearSolver direct(SolverKind::Direct), pcg(SolverKind::Pcg);
    solve_full(a, pm, direct);
    solve_full(b, pm, pcg);
    EXPECT_LT((a.chi - b.chi).norm() / a.chi.norm(), 1e-6);
}

TEST(EffectiveTensor, VoidScalesBase) {
    const auto mesh = build_mesh<2>(4, 2);
    const auto pm = build_periodic_map(mesh);
    DesignField f;
    f.xi = default_smoothing(mesh);
    f.alpha = Eigen::VectorXd::Constant(mesh.num_control_points(), -3 * f.xi);
    const auto qf = evaluate_qp_field(f, mesh);
    Assembler<2> asmb(mesh, pm);
    auto prob = asmb.assemble(qf, MaterialModel{});
    solve_full(prob, pm);
    const auto t = effective_tensor(mesh, qf, MaterialModel{}, prob.chi);
    EXPECT_LT((t.C - 1e-6 * MaterialModel{}.voigt<2>()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EffectiveTensor, ScalingInvarianceAndSymmetry) {
    const auto a = solve_design(10, 2, centred_hole(0.3), MaterialModel{1.0, 0.3});
    const auto b = solve_design(10, 2, centred_hole(0.3), MaterialModel{2.0, 0.3});
    const auto ta = effective_tensor(a.mesh, a.qf, MaterialModel{1.0, 0.3}, a.prob.chi);
    const auto tb = effective_tensor(b.mesh, b.qf, MaterialModel{2.0, 0.3}, b.prob.chi);
    EXPECT_LT((tb.C - 2.0 * ta.C).cwiseAbs().maxCoeff(), 1e-12);
    const auto ea = engineering_constants<2>(ta.C), eb = engineering_constants<2>(tb.C);
    EXPECT_NEAR(ea.nu_xy(), eb.nu_xy(), 1e-12);
    EXPECT_NEAR(ea.nu_yx(), eb.nu_yx(), 1e-12);
    EXPECT_EQ((ta.C - ta.C.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(ta.C).eigenvalues().minCoeff(), 0.0);
    // a centred circular hole keeps square symmetry
    EXPECT_NEAR(ta.C(0, 0), ta.C(1, 1), 1e-10);
    EXPECT_NEAR(ta.C(0, 2), 0.0, 1e-10);
}

TEST(EngineeringConstants, ReportedAuxeticTensor) {
    Eigen::Matrix3d C;
    C << 0.0658, -0.0372, 0, -0.0372, 0.0658, 0, 0, 0, 0.0020;
    const auto ec = engineering_constants<2>(C);
    ASSERT_TRUE(ec.defined);
    EXPECT_NEAR(ec.nu_xy(), -0.565, 1e-3);
    EXPECT_NEAR(ec.nu_yx(), -0.565, 1e-3);
}

TEST(EngineeringConstants, IsotropicDiagonalAndSingular) {
    const auto ec = engineering_constants<2>(MaterialModel{1.0, 0.3}.voigt<2>());
    EXPECT_NEAR(ec.nu_xy(), 0.3, 1e-14);
    EXPECT_NEAR(ec.youngs(0), 1.0, 1e-14);
    const auto ec3 = engineering_constants<3>(MaterialModel{1.0, 0.3}.voigt<3>());
    EXPECT_NEAR(ec3.nu(0, 2), 0.3, 1e-14);
    EXPECT_NEAR(ec3.youngs(2), 1.0, 1e-14);

    const Eigen::Matrix3d D = Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal();
    EXPECT_EQ(engineering_constants<2>(D).nu_xy(), 0.0);
    EXPECT_FALSE(engineering_constants<2>(Eigen::Matrix3d::Zero()).defined);
    Eigen::Matrix3d S = Eigen::Matrix3d::Ones();
    EXPECT_FALSE(engineering_constants<2>(S).defined);
}

TEST(EffectiveTensor3D, SolidIdentityAndHoleSymmetry) {
    const MaterialModel mat{1.0, 0.3};
    const auto mesh = build_mesh<3>(3, 2);
    const auto pm = build_periodic_map(mesh);
    Assembler<3> asmb(mesh, pm);
    auto solid = init_from_holes(mesh, HoleSeedConfig<3>::solid(), default_smoothing(mesh));
    auto qf = evaluate_qp_field(solid, mesh);
    auto prob = asmb.assemble(qf, mat);
    solve_full(prob, pm);
    EXPECT_LT((effective_tensor(mesh, qf, mat, prob.chi).C - mat.voigt<3>()).cwiseAbs().maxCoeff(), 1e-8);

    HoleSeedConfig<3> seeds;
    seeds.holes.push_back({{0.5, 0.5, 0.5}, 0.3});
    const auto m4 = build_mesh<3>(4, 2);
    const auto pm4 = build_periodic_map(m4);
    Assembler<3> asmb4(m4, pm4);
    auto f = init_from_holes(m4, seeds, default_smoothing(m4));
    qf = evaluate_qp_field(f, m4);
    prob = asmb4.assemble(qf, mat);
    solve_full(prob, pm4);
    const auto t = effective_tensor(m4, qf, mat, prob.chi);
    EXPECT_NEAR(t.C(0, 0), t.C(2, 2), 1e-8);
    EXPECT_LT((t.C.block<3, 3>(0, 3).cwiseAbs().maxCoeff()), 1e-8);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<VoigtMatrix<3>>(t.C).eigenvalues().minCoeff(), 0.0);
    EXPECT_LT(t.C(0, 0), mat.voigt<3>()(0, 0));
}

template <int D>
void expect_pattern_matches_triplets(const ControlMesh<D>& mesh, bool periodic) {
    const auto pm = build_periodic_map(mesh);
    Assembler<D> asmb(mesh, pm, periodic);
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<int> dofs;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        asmb.element_dofs(e, dofs);
        for (int a : dofs)
            for (int b : dofs)
                if (a >= 0 && b >= 0) trip.emplace_back(a, b, 1.0);
    }
    SparseMatrix ref(asmb.num_dofs(), asmb.num_dofs());
    ref.setFromTriplets(trip.begin(), trip.end());
    const auto& P = asmb.pattern();
    ASSERT_EQ(P.nonZeros(), ref.nonZeros());
    for (Eigen::Index j = 0; j <= P.cols(); ++j) EXPECT_EQ(P.outerIndexPtr()[j], ref.outerIndexPtr()[j]);
    for (Eigen::Index k = 0; k < P.nonZeros(); ++k) EXPECT_EQ(P.innerIndexPtr()[k], ref.innerIndexPtr()[k]);
}

TEST(Assemble, PatternMatchesElementCoupling) {
    expect_pattern_matches_triplets(build_mesh<2>(5, 2), true);
    expect_pattern_matches_triplets(build_mesh<2>(3, 1), false);
    expect_pattern_matches_triplets(build_mesh<3>(3, 2), true);
}
