// Python bindings for the main operations: phantoms, the forward model,
// reconstruction pipelines, metrics, attacks and the robustness bound.
#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smug/eval.hpp"
#include "smug/linops.hpp"
#include "smug/manifest.hpp"
#include "smug/metrics.hpp"
#include "smug/phantom.hpp"
#include "smug/robustness.hpp"
#include "smug/training.hpp"

namespace py = pybind11;
using namespace smug;

namespace {

using carray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

ComplexImage image_from_array(const carray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D complex array");
  ComplexImage img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  auto r = a.unchecked<2>();
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      img.re.at(y, x) = r(y, x).real();
      img.im.at(y, x) = r(y, x).imag();
    }
  return img;
}

KSpaceData kspace_from_array(const carray& a) {
  ComplexImage img = image_from_array(a);
  KSpaceData y(img.height, img.width);
  y.re = img.re;
  y.im = img.im;
  return y;
}

carray array_from_image(const ComplexImage& img) {
  carray out({img.height, img.width});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      w(y, x) = std::complex<double>(img.re.at(y, x), img.im.at(y, x));
  return out;
}

carray array_from_kspace(const KSpaceData& k) {
  ComplexImage img(k.height, k.width);
  img.re = k.re;
  img.im = k.im;
  return array_from_image(img);
}

py::array_t<bool> array_from_mask(const SamplingMask& m) {
  py::array_t<bool> out({m.height, m.width});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t r = 0; r < m.height; ++r)
    for (std::size_t c = 0; c < m.width; ++c) w(r, c) = m.kept(r, c);
  return out;
}

ReconSpec spec_of(const MethodModels& m, const UnrollConfig& cfg, const SmoothingConfig& sc) {
  return make_spec(m, cfg, sc);
}

}  // namespace

PYBIND11_MODULE(smug, m) {
  m.doc() = "smoothed-unrolling MRI reconstruction core";
  m.attr("__version__") = kCodeVersion;

  py::class_<SamplingMask>(m, "SamplingMask")
      .def_property_readonly("array", &array_from_mask)
      .def_property_readonly("kept_lines", &SamplingMask::kept_lines)
      .def_readonly("accel", &SamplingMask::accel)
      .def_readonly("center_frac", &SamplingMask::center_frac);

  py::class_<UnrollConfig>(m, "UnrollConfig")
      .def(py::init<>())
      .def_readwrite("n_steps", &UnrollConfig::n_steps)
      .def_readwrite("lam", &UnrollConfig::lambda)
      .def_readwrite("cg_tol", &UnrollConfig::cg_tol)
      .def_readwrite("cg_max", &UnrollConfig::cg_max);

  py::class_<SmoothingConfig>(m, "SmoothingConfig")
      .def(py::init<>())
      .def(py::init([](double sigma, int samples, std::uint64_t seed) {
             return SmoothingConfig{sigma, samples, seed};
           }),
           py::arg("sigma"), py::arg("samples") = 1, py::arg("seed") = 0)
      .def_readwrite("sigma", &SmoothingConfig::sigma)
      .def_readwrite("samples", &SmoothingConfig::samples)
      .def_readwrite("seed", &SmoothingConfig::seed);

  py::class_<MethodModels>(m, "Models")
      .def_property_readonly("name", [](const MethodModels& mm) { return mm.name; })
      .def_property_readonly("has_encoder",
                             [](const MethodModels& mm) { return mm.encoder.has_value(); })
      .def("denoise",
           [](const MethodModels& mm, const carray& x) {
             return array_from_image(denoise(mm.denoiser, image_from_array(x)));
           })
      .def("bound_M", [](const MethodModels& mm, std::size_t h, std::size_t w) {
        return bound_M(mm.denoiser, h, w);
      });

  m.def("make_phantoms",
        [](std::size_t size, int n, std::uint64_t seed) {
          PhantomSpec spec;
          spec.size = size;
          spec.seed = seed;
          auto imgs = generate_phantoms(spec, n);
          std::vector<carray> out;
          for (const auto& img : imgs) out.push_back(array_from_image(img));
          return out;
        },
        py::arg("size"), py::arg("n"), py::arg("seed") = 0);

  m.def("make_vd_mask",
        [](std::size_t h, std::size_t w, double accel, double center_frac, std::uint64_t seed) {
          return make_vd_mask(h, w, accel, center_frac, seed);
        },
        py::arg("h"), py::arg("w"), py::arg("accel"), py::arg("center_frac") = 0.08,
        py::arg("seed") = 0);

  m.def("dft2", [](const carray& x) {
    return array_from_kspace(dft2_unitary(image_from_array(x)));
  });
  m.def("idft2", [](const carray& y) {
    return array_from_image(idft2_unitary(kspace_from_array(y)));
  });
  m.def("apply_forward", [](const SamplingMask& mask, const carray& x) {
    return array_from_kspace(apply_forward(ForwardOperator{mask}, image_from_array(x)));
  });
  m.def("apply_adjoint", [](const SamplingMask& mask, const carray& y) {
    return array_from_image(apply_adjoint(ForwardOperator{mask}, kspace_from_array(y)));
  });

  m.def("spectral_norm", [](const SamplingMask& mask) {
    return spectral_norm_forward(ForwardOperator{mask}).value;
  });
  m.def("alpha_constant", [](const SamplingMask& mask, double lam) {
    return alpha_constant(ForwardOperator{mask}, lam).value;
  }, py::arg("mask"), py::arg("lam") = 1.0);

  m.def("psnr", [](const carray& x, const carray& t) {
    return psnr(image_from_array(x), image_from_array(t));
  });
  m.def("ssim", [](const carray& x, const carray& t) {
    return ssim(image_from_array(x), image_from_array(t));
  });

  m.def("theorem1_bound", &theorem1_bound, py::arg("n"), py::arg("sigma"), py::arg("M"),
        py::arg("alpha"), py::arg("opnorm"));

  m.def("load_models", &load_models, py::arg("path"));

  m.def("init_models",
        [](const std::string& method, int channels, int layers, double output_bound,
           std::uint64_t seed) {
          MethodModels mm;
          mm.name = method;
          mm.method = method_from_name(method);
          DenoiserSpec spec;
          spec.hidden_channels = channels;
          spec.n_layers = layers;
          spec.output_bound = output_bound;
          mm.denoiser = init_denoiser(spec, seed);
          if (mm.method == ReconMethod::wsmug || mm.method == ReconMethod::istanet_wsmug)
            mm.encoder = init_encoder(EncoderSpec{}, seed + 1);
          if (mm.method == ReconMethod::istanet || mm.method == ReconMethod::istanet_smug ||
              mm.method == ReconMethod::istanet_wsmug)
            mm.ista = init_istanet(IstaSpec{}, seed + 2);
          return mm;
        },
        py::arg("method") = "smug", py::arg("channels") = 16, py::arg("layers") = 3,
        py::arg("output_bound") = 1.5, py::arg("seed") = 0);

  m.def("reconstruct",
        [](const MethodModels& mm, const SamplingMask& mask, const carray& y,
           const UnrollConfig& cfg, const SmoothingConfig& sc) {
          ReconSpec spec = spec_of(mm, cfg, sc);
          ReconTrace tr = reconstruct(spec, ForwardOperator{mask}, kspace_from_array(y));
          return array_from_image(tr.final());
        },
        py::arg("models"), py::arg("mask"), py::arg("y"), py::arg("cfg") = UnrollConfig{},
        py::arg("smoothing") = SmoothingConfig{});

  m.def("pgd_attack",
        [](const MethodModels& mm, const SamplingMask& mask, const carray& y, const carray& t,
           double epsilon_scale, int steps, const UnrollConfig& cfg, const SmoothingConfig& sc,
           std::uint64_t seed) {
          ReconSpec spec = spec_of(mm, cfg, sc);
          AttackConfig ac;
          ac.epsilon_scale = epsilon_scale;
          ac.steps = steps;
          ac.seed = seed;
          PerturbationResult res =
              pgd_attack(spec, ForwardOperator{mask}, kspace_from_array(y), image_from_array(t), ac);
          return py::make_tuple(array_from_kspace(res.delta), res.objective, res.epsilon);
        },
        py::arg("models"), py::arg("mask"), py::arg("y"), py::arg("t"),
        py::arg("epsilon_scale") = 0.02, py::arg("steps") = 10, py::arg("cfg") = UnrollConfig{},
        py::arg("smoothing") = SmoothingConfig{}, py::arg("seed") = 0);

  m.def("robustness_error",
        [](const MethodModels& mm, const SamplingMask& mask, const carray& y, const carray& delta,
           const UnrollConfig& cfg, const SmoothingConfig& sc) {
          ReconSpec spec = spec_of(mm, cfg, sc);
          return robustness_error(spec, ForwardOperator{mask}, kspace_from_array(y),
                                  kspace_from_array(delta));
        },
        py::arg("models"), py::arg("mask"), py::arg("y"), py::arg("delta"),
        py::arg("cfg") = UnrollConfig{}, py::arg("smoothing") = SmoothingConfig{});
}
