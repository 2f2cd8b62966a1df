#include "hatebm/error.hpp"
#include "hatebm/trainer.hpp"

namespace hatebm {

SampleBank::SampleBank(ImageBatch x, LatentBatch z) : x_(std::move(x)), z_(std::move(z)) {
  if (x_.batch() != z_.batch()) throw ShapeError("sample bank: image and latent stores differ in size");
}

SampleBank::Drawn SampleBank::draw(std::size_t count, Rng& rng) const {
  if (count > capacity()) {
    throw ContractError("bank draw of " + std::to_string(count) + " exceeds capacity " + std::to_string(capacity()));
  }
  Drawn d;
  d.indices = rng.choose_unique(capacity(), count);
  d.x = x_.gather(d.indices);
  d.z = z_.gather(d.indices);
  return d;
}

void SampleBank::overwrite(const std::vector<std::size_t>& indices, const ImageBatch& x, const LatentBatch& z) {
  if (x.batch() != indices.size() || z.batch() != indices.size()) {
    throw ShapeError("bank overwrite: pair count does not match index count");
  }
  if (x.sample_shape() != x_.sample_shape() || z.sample_shape() != z_.sample_shape()) {
    throw ShapeError("bank overwrite: pair shapes do not match the bank");
  }
  x_.scatter(indices, x);
  z_.scatter(indices, z);
}

SampleBank bank_init(std::size_t capacity, const Model& generator, Rng& rng, std::size_t chunk) {
  if (capacity == 0) throw ConfigError("bank capacity must be positive");
  const Shape& latent = generator.net->input_shape();
  const Shape image = generator.net->output_shape();
  Shape zs{capacity};
  zs.insert(zs.end(), latent.begin(), latent.end());
  Shape xs{capacity};
  xs.insert(xs.end(), image.begin(), image.end());
  LatentBatch z(zs);
  rng.fill_normal(z.values());
  ImageBatch x(xs);
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < capacity; start += chunk) {
    const std::size_t n = std::min(chunk, capacity - start);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
    x.scatter(idx, generator(z.gather(idx)));
  }
  return SampleBank(std::move(x), std::move(z));
}

SampleBank::Drawn bank_draw_replace(SampleBank& bank, const ImageBatch& new_x, const LatentBatch& new_z, Rng& rng) {
  if (new_x.batch() != new_z.batch()) throw ShapeError("bank_draw_replace: new pairs differ in count");
  SampleBank::Drawn d = bank.draw(new_x.batch(), rng);
  bank.overwrite(d.indices, new_x, new_z);
  return d;
}

}  // namespace hatebm
