fn main() {
    println!("perfseer");
}
