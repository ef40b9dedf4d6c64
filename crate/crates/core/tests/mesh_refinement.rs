use lmmg_core::create_square_mesh;
use lmmg_core::mesh::barycentric;
use proptest::prelude::*;

fn random_refinements(seed_marks: &[Vec<u16>]) -> Vec<lmmg_core::Triangulation> {
    let mut meshes = vec![create_square_mesh([0.0, 0.0], [1.0, 1.0], 4).unwrap()];
    for marks in seed_marks {
        let last = meshes.last().unwrap();
        let n = last.num_elements();
        let mut marked: Vec<usize> = marks.iter().map(|&m| m as usize % n).collect();
        marked.sort_unstable();
        marked.dedup();
        meshes.push(last.refine(&marked).unwrap());
    }
    meshes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_stays_conforming_and_shape_regular(
        marks in prop::collection::vec(prop::collection::vec(any::<u16>(), 1..12), 1..8)
    ) {
        let meshes = random_refinements(&marks);
        let initial = meshes[0].similarity_class_count();
        for m in &meshes {
            prop_assert!(m.check_conformity().is_ok());
            prop_assert!(m.similarity_class_count() <= 4 * initial.max(1));
        }
        // areas are preserved
        let last = meshes.last().unwrap();
        let area: f64 = (0..last.num_elements()).map(|e| last.element_geometry(e).area).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn children_lie_inside_their_parent(
        marks in prop::collection::vec(prop::collection::vec(any::<u16>(), 1..12), 1..5)
    ) {
        let meshes = random_refinements(&marks);
        for pair in meshes.windows(2) {
            let (parent, child) = (&pair[0], &pair[1]);
            prop_assert!(child.is_child_of(parent));
            for e in 0..child.num_elements() {
                let p = child.parent_of(e).unwrap();
                let tri = parent.element_points(p);
                for x in child.element_points(e) {
                    let b = barycentric(tri, x);
                    prop_assert!(b.iter().all(|&l| l >= -1e-12), "{:?}", b);
                }
            }
        }
    }
}

#[test]
fn uniform_refinement_doubles_the_count() {
    let mut mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], 4).unwrap();
    for expected in [64, 128, 256] {
        mesh = mesh.refine_all().unwrap();
        assert_eq!(mesh.num_elements(), expected);
        assert!(mesh.check_conformity().is_ok());
    }
}

#[test]
fn text_round_trip() {
    let mesh = create_square_mesh([-1.0, -1.0], [1.0, 1.0], 3).unwrap().refine(&[0, 5]).unwrap();
    let mut buf = Vec::new();
    mesh.write_text(&mut buf).unwrap();
    let back = lmmg_core::Triangulation::read_text(&buf[..]).unwrap();
    assert_eq!(back.vertices(), mesh.vertices());
    assert_eq!(back.elements(), mesh.elements());
    assert_eq!(back.boundary_flags(), mesh.boundary_flags());
}
